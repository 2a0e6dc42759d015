"""Characteristic time T(mu) = 1 / max_{w in Pi} D(w, mu, F), oracle allocations
and the analytic bounds built from neighbour distances.

The max-min problem is solved with a level (cutting-plane) method.  For any
allocation w, the minimising neighbour's confusing instance lam defines the
linear function w' -> sum_a w'_a kl(mu_a, lam_a).  It upper-bounds g = D(., mu, F)
everywhere and touches it at w, so the cuts give a certified upper bound
(LP over Pi of the cut model) next to the lower bound from evaluated points.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alt import AltSet
from .divergences import binary_kl, kl
from .model import (
    AltBoundaryError,
    DegenerateBasisError,
    ExplorationScenario,
    FeasiblePolytope,
    InfeasiblePolytopeError,
    NonUniqueOptimumError,
    RewardFamily,
    VertexPolicy,
)
from .polytope import Projector, _crossover, _walk, active_bases, project_onto_polytope


def exploration_set(polytope: FeasiblePolytope, scenario) -> FeasiblePolytope:
    if ExplorationScenario(scenario) is ExplorationScenario.ANYTIME:
        return polytope
    return FeasiblePolytope.simplex(polytope.n_arms)


@dataclass(frozen=True, eq=False)
class OracleAllocation:
    w: np.ndarray
    value: float            # g(w), a lower bound on max g
    upper: float            # certified upper bound on max g
    iterations: int

    @property
    def characteristic_time(self) -> float:
        return 1.0 / self.value


class _CutModel:
    """max t s.t. t <= s_j . w for every cut, w in Pi; solved by vertex walk."""

    def __init__(self, pi_poly: FeasiblePolytope):
        self.poly = pi_poly
        K = pi_poly.n_arms
        self.K = K
        B = np.asarray(pi_poly.B)
        self.base_A = np.hstack([B, np.zeros((B.shape[0], 1))])
        self.base_b = np.asarray(pi_poly.c)
        self.cuts = []
        self.obj = np.zeros(K + 1)
        self.obj[K] = 1.0

    def add(self, s):
        self.cuts.append(np.asarray(s, dtype=float))

    def maximise(self):
        K = self.K
        C = np.array(self.cuts)
        A = np.vstack([self.base_A, np.hstack([-C, np.ones((len(C), 1))])])
        b = np.concatenate([self.base_b, np.zeros(len(C))])
        v0 = self.poly.initial_vertex()
        vals = C @ v0.pi
        j = int(np.argmin(vals))
        basis = list(v0.basis) + [self.base_A.shape[0] + j]
        try:
            x, _ = _walk(A, b, self.obj, basis, set(self.poly.eq_rows), set(self.poly.shadow_rows))
        except np.linalg.LinAlgError:  # pragma: no cover - defensive
            x0 = np.append(v0.pi, vals[j])
            x, basis = _crossover(A, b, x0, self.obj, fixed_first=self.poly.eq_rows,
                                  skip=set(self.poly.shadow_rows))
            x, _ = _walk(A, b, self.obj, basis, set(self.poly.eq_rows), set(self.poly.shadow_rows))
        return float(x[K]), x[:K]


def _g_and_cut(alt: AltSet, w, mu, V, family):
    values, lam, _ = alt.per_neighbor(w, mu, V)
    j = int(np.argmin(values))
    cut = kl(mu, lam[j], family)
    return float(values[j]), np.asarray(cut, dtype=float), j


def solve_oracle_allocation(means, polytope: FeasiblePolytope, scenario, family: RewardFamily,
                            domain=None, rel_gap=1e-4, max_iter=5000, level=0.7,
                            alt: AltSet | None = None) -> OracleAllocation:
    """Maximise g(w) = D(w, mu, F) over the exploration set Pi.

    Stops when the certified gap (upper - lower) is at most rel_gap * lower.
    """
    mu = np.asarray(means, dtype=float)
    pi_poly = exploration_set(polytope, scenario)
    alt = alt or AltSet(polytope, family, domain)
    _, nbrs, V, gaps, unique = alt.optimum(mu)
    if not unique:
        raise NonUniqueOptimumError("optimal policy is not unique at these means")
    extra = pi_poly.extra_rows
    A_pi = np.asarray(pi_poly.B)[extra]
    b_pi = np.asarray(pi_poly.c)[extra]
    K = len(mu)
    w = project_onto_polytope(np.full(K, 1.0 / K), pi_poly)
    best_val, cut, _ = _g_and_cut(alt, w, mu, V, family)
    best_w = w
    model = _CutModel(pi_poly)
    model.add(cut)
    cuts = [cut]
    upper = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        ub, _ = model.maximise()
        upper = min(upper, ub)
        if upper - best_val <= rel_gap * max(best_val, 0.0) or upper <= 1e-300:
            break
        lev = best_val + level * (upper - best_val)
        S = np.array(cuts)
        try:
            w_new = _project_level(w, A_pi, b_pi, S, lev, K)
        except InfeasiblePolytopeError:
            # numerically empty level set: the model maximum is essentially lev
            upper = min(upper, lev)
            continue
        w = w_new
        val, cut, _ = _g_and_cut(alt, w, mu, V, family)
        if val > best_val:
            best_val, best_w = val, w
        model.add(cut)
        cuts.append(cut)
    if best_val <= 1e-12:
        raise AltBoundaryError("instance on Alt-set boundary")
    return OracleAllocation(np.asarray(best_w), float(best_val), float(upper), it)


def _project_level(w, A_pi, b_pi, S, lev, K):
    from .polytope import euclidean_project
    A = np.vstack([A_pi, -S]) if A_pi.size else -S
    b = np.concatenate([b_pi, np.full(len(S), -lev)])
    return euclidean_project(w, A, b, lower=np.zeros(K), E=np.ones((1, K)), f=[1.0])


def g_value(w, means, polytope, family, domain=None) -> float:
    """D(w, mu, F) (the objective of the allocation problem)."""
    return AltSet(polytope, family, domain).evaluate(w, means).value


class AllocationTracker:
    """Warm-started projected supergradient ascent on g, a few steps per round.

    Used by track-and-stop samplers: each call performs `inner_iters` steps
    from the previous iterate at the current means and returns the iterate,
    kept inside Pi intersected with {w_a >= floor}.
    """

    def __init__(self, alt: AltSet, pi_poly: FeasiblePolytope, eta0=0.5, inner_iters=1):
        self.alt = alt
        self.pi_poly = pi_poly
        self.eta0 = eta0
        self.inner_iters = inner_iters
        K = pi_poly.n_arms
        self.project = Projector(pi_poly)
        self.w = self.project(np.full(K, 1.0 / K))
        self.k = 0
        self.floor = None
        self.warm = {}

    def step(self, means, floor=0.0, V=None):
        mu = np.asarray(means, dtype=float)
        if V is None:
            V = self.alt.optimum(mu)[2]
        w = self.w
        if self.floor is None or floor > self.floor:
            w = self.project(w, floor)
        self.floor = floor
        for _ in range(self.inner_iters):
            self.k += 1
            values, lam, _ = self.alt.per_neighbor(w, mu, V, self.warm)
            j = int(np.argmin(values))
            s = np.asarray(kl(mu, lam[j], self.alt.family), dtype=float)
            s = s - s.mean()
            nrm = np.linalg.norm(s)
            if not np.isfinite(nrm) or nrm <= 0:
                break
            w = self.project(w + self.eta0 / np.sqrt(self.k) * s / nrm, floor)
        self.w = w
        return w


# Analytic bounds ------------------------------------------------------------

def neighbor_distances(means, polytope, optimal: VertexPolicy | None = None):
    """List of (neighbour vertex, d) with d = mu.(pi* - pi') / ||pi* - pi'||."""
    alt = AltSet(polytope, RewardFamily.gaussian(1.0))
    mu = np.asarray(means, dtype=float)
    vertex, nbrs, V, gaps, _ = alt.optimum(mu) if optimal is None else (optimal, None, None, None, None)
    if nbrs is None:
        from .polytope import enumerate_neighbors
        nbrs = enumerate_neighbors(optimal, polytope)
        V = nbrs.directions()
    d = (V @ mu) / np.linalg.norm(V, axis=1)
    return [(n.vertex, float(x)) for n, x in zip(nbrs.neighbors, d)]


def characteristic_time_bounds(means, polytope, sigma):
    """(lower, upper) bracket on T from neighbour distances (Gaussian arms).

    lower = max over neighbours of 2 sigma^2 / d^2 and upper = K * lower.  The
    upper end uses the uniform allocation, so it applies whenever the
    exploration set contains it.
    """
    K = polytope.n_arms
    ds = np.array([d for _, d in neighbor_distances(means, polytope)])
    per = 2.0 * sigma ** 2 / ds ** 2
    return float(np.max(per)), float(K * np.max(per))


def conditioning_bound(means, polytope, sigma, optimal: VertexPolicy | None = None, delta=None):
    """(kappa^2, H, bound) where kappa^2 is the smallest squared condition
    number of an active basis at the optimum, H = 2 sigma^2 / sum of squared
    gaps to the best arm, and bound = H / kappa^2 * kl(delta, 1 - delta)
    (or H / kappa^2 if delta is None)."""
    mu = np.asarray(means, dtype=float)
    if optimal is None:
        from .polytope import solve_optimal_policy
        optimal = solve_optimal_policy(mu, polytope)
    B = np.asarray(polytope.B)
    best = np.inf
    for basis in active_bases(optimal, polytope):
        s = np.linalg.svd(B[list(basis)], compute_uv=False)
        if s[-1] <= 1e-10:
            continue
        best = min(best, (s[0] / s[-1]) ** 2)
    if not np.isfinite(best):
        from .model import DegenerateBasisError
        raise DegenerateBasisError("degenerate basis at the optimum")
    gaps = mu.max() - mu
    H = 2.0 * sigma ** 2 / float(np.sum(gaps ** 2))
    factor = 1.0 if delta is None else binary_kl(delta, 1 - delta)
    return float(best), H, H / best * factor


def rank_one_ratio(w, means, polytope, neighbor) -> float:
    """(Delta . B^-1 e_r)^2 / ||B^-1 e_r||^2_{diag(1/w)} for one neighbour record,
    with B the origin basis and r the released row."""
    B = np.asarray(polytope.B)
    basis = list(neighbor.origin_basis)
    pos = basis.index(neighbor.relaxed_row)
    u = np.linalg.solve(B[basis], np.eye(len(basis))[pos])
    mu = np.asarray(means, dtype=float)
    delta = mu.max() - mu
    w = np.asarray(w, dtype=float)
    return float((delta @ u) ** 2 / np.sum(u * u / w))


def sample_complexity_lower_bound(means, polytope, scenario, family, delta, domain=None) -> float:
    T = solve_oracle_allocation(means, polytope, scenario, family, domain).characteristic_time
    return T * _kl_factor(delta)


def _kl_factor(delta):
    if delta == 0.5:
        return 0.0
    return binary_kl(delta, 1 - delta)


@dataclass(eq=False)
class HardnessReport:
    characteristic_time: float
    certified_lower_time: float        # 1 / certified upper bound on max g
    oracle_allocation: np.ndarray
    minimizing_neighbor: VertexPolicy
    optimal_policy: VertexPolicy
    distance_per_neighbor: list
    sandwich: tuple | None
    condition_bound: tuple | None
    delta: float
    sample_lower_bound: float
    scenario: str = "anytime"
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "optimal_policy": self.optimal_policy.pi.tolist(),
            "characteristic_time": self.characteristic_time,
            "characteristic_time_certified_range": [self.certified_lower_time, self.characteristic_time],
            "oracle_allocation": self.oracle_allocation.tolist(),
            "minimizing_neighbor": self.minimizing_neighbor.pi.tolist(),
            "distance_per_neighbor": [{"neighbor": v.pi.tolist(), "d": d} for v, d in self.distance_per_neighbor],
            "sandwich": None if self.sandwich is None else list(self.sandwich),
            "condition_bound": None if self.condition_bound is None else {
                "kappa_squared": self.condition_bound[0], "H": self.condition_bound[1],
                "bound": self.condition_bound[2]},
            "delta": self.delta,
            "sample_lower_bound": self.sample_lower_bound,
        }


def analyze(means, polytope, scenario, family, delta=0.1, domain=None) -> HardnessReport:
    mu = np.asarray(means, dtype=float)
    alt = AltSet(polytope, family, domain)
    sol = solve_oracle_allocation(mu, polytope, scenario, family, domain, alt=alt)
    res = alt.evaluate(sol.w, mu)
    vertex = alt.optimum(mu)[0]
    dists = neighbor_distances(mu, polytope)
    sandwich = cond = None
    if family.is_gaussian:
        sandwich = characteristic_time_bounds(mu, polytope, family.sigma)
        try:
            cond = conditioning_bound(mu, polytope, family.sigma, vertex, delta)
        except DegenerateBasisError:
            cond = None
    T = sol.characteristic_time
    return HardnessReport(
        characteristic_time=T,
        certified_lower_time=1.0 / sol.upper,
        oracle_allocation=sol.w,
        minimizing_neighbor=res.neighbor,
        optimal_policy=vertex,
        distance_per_neighbor=dists,
        sandwich=sandwich,
        condition_bound=cond,
        delta=delta,
        sample_lower_bound=T * _kl_factor(delta),
        scenario=ExplorationScenario(scenario).value,
        extras={"solver_iterations": sol.iterations},
    )
