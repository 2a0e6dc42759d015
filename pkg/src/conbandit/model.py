"""Shared domain types: reward families, bandit instances, constraint polytopes,
vertex policies and the exploration scenario selector.

Everything here is an immutable value object.  Algorithms live in the other
modules; this file only stores data and checks invariants.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

FEAS_TOL = 1e-9
BASIS_SV_TOL = 1e-10


class ConBanditError(Exception):
    """Base class for errors raised by this package."""


class InfeasiblePolytopeError(ConBanditError):
    pass


class NonUniqueOptimumError(ConBanditError):
    pass


class DegenerateBasisError(ConBanditError):
    pass


class AltBoundaryError(ConBanditError):
    pass


class ConvergenceError(ConBanditError):
    pass


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


class FamilyKind(str, Enum):
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"


@dataclass(frozen=True)
class RewardFamily:
    """One-parameter reward family.  Gaussian carries a shared noise scale."""

    kind: FamilyKind
    sigma: float | None = None

    def __post_init__(self):
        kind = FamilyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is FamilyKind.GAUSSIAN:
            if self.sigma is None or not np.isfinite(self.sigma) or self.sigma <= 0:
                raise ValueError("Gaussian family needs sigma > 0")
            object.__setattr__(self, "sigma", float(self.sigma))
        else:
            object.__setattr__(self, "sigma", None)

    @classmethod
    def gaussian(cls, sigma=1.0):
        return cls(FamilyKind.GAUSSIAN, sigma)

    @classmethod
    def bernoulli(cls):
        return cls(FamilyKind.BERNOULLI)

    @property
    def is_gaussian(self) -> bool:
        return self.kind is FamilyKind.GAUSSIAN

    def default_domain(self) -> tuple[float, float]:
        if self.is_gaussian:
            return (-np.inf, np.inf)
        return (1e-3, 1.0 - 1e-3)

    def to_dict(self):
        d = {"kind": self.kind.value}
        if self.is_gaussian:
            d["sigma"] = self.sigma
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(FamilyKind(d["kind"]), d.get("sigma"))


class ExplorationScenario(str, Enum):
    """Where the sampling allocation is allowed to live."""

    END_OF_TIME = "end_of_time"   # any distribution over arms
    ANYTIME = "anytime"           # allocation itself must be feasible


@dataclass(frozen=True, eq=False)
class BanditInstance:
    means: np.ndarray
    family: RewardFamily
    domain: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "means", _frozen(self.means))
        dom = self.domain if self.domain is not None else self.family.default_domain()
        lo = -np.inf if dom[0] is None else float(dom[0])
        hi = np.inf if dom[1] is None else float(dom[1])
        if not lo < hi:
            raise ValueError(f"invalid mean domain [{lo}, {hi}]")
        object.__setattr__(self, "domain", (lo, hi))

    @property
    def n_arms(self) -> int:
        return len(self.means)


class FeasiblePolytope:
    """F = {pi in the simplex : A pi <= b}, stored as one system B pi <= c.

    Row layout: row 0 is sum(pi) <= 1, row 1 is -sum(pi) <= -1, rows 2..K+1 are
    the nonnegativity rows -pi_a <= 0, and the user constraints follow.  Every
    row is scaled to unit Euclidean norm.  Any pair of exactly opposite rows is
    treated as an equality; the lower index of the pair is its representative.
    """

    def __init__(self, n_arms: int, A=None, b=None):
        K = int(n_arms)
        if K < 2:
            raise ValueError("need at least two arms")
        rows = [np.ones(K), -np.ones(K)]
        rhs = [1.0, -1.0]
        for a in range(K):
            e = np.zeros(K)
            e[a] = -1.0
            rows.append(e)
            rhs.append(0.0)
        n_simplex = len(rows)
        if A is not None:
            A = np.atleast_2d(np.asarray(A, dtype=float))
            b = np.atleast_1d(np.asarray(b, dtype=float))
            if A.shape[1] != K or A.shape[0] != b.shape[0]:
                raise ValueError("constraint shapes do not match the number of arms")
            rows.extend(A)
            rhs.extend(b)
        B, c = [], []
        for r, v in zip(rows, rhs):
            nrm = np.linalg.norm(r)
            if nrm == 0:
                if v < 0:
                    # 0 <= v fails: keep a marker so feasibility reports it
                    B.append(np.zeros(K))
                    c.append(v)
                continue
            r, v = r / nrm, v / nrm
            if any(np.allclose(r, r2, atol=1e-12) and abs(v - v2) <= 1e-12
                   for r2, v2 in zip(B, c)):
                continue
            B.append(r)
            c.append(v)
        self.n_arms = K
        self.n_simplex_rows = n_simplex
        self.B = _frozen(B)
        self.c = _frozen(c)
        self.user_A = None if A is None else _frozen(A)
        self.user_b = None if A is None else _frozen(b)
        eq = []
        shadow = []
        for i in range(len(c)):
            for j in range(i + 1, len(c)):
                if np.allclose(self.B[i], -self.B[j], atol=1e-12) and abs(self.c[i] + self.c[j]) <= 1e-12:
                    eq.append(i)
                    shadow.append(j)
        self.eq_rows = tuple(eq)
        self.shadow_rows = tuple(shadow)

    @classmethod
    def simplex(cls, n_arms: int) -> "FeasiblePolytope":
        return cls(n_arms)

    @property
    def n_rows(self) -> int:
        return len(self.c)

    @property
    def extra_rows(self) -> np.ndarray:
        """Indices of rows that are not simplex rows."""
        return np.arange(self.n_simplex_rows, self.n_rows)

    @property
    def is_simplex(self) -> bool:
        return self.n_rows == self.n_simplex_rows

    def violation(self, pi) -> float:
        """Largest constraint violation (<= 0 means feasible)."""
        return float(np.max(self.B @ np.asarray(pi, dtype=float) - self.c))

    def contains(self, pi, tol=FEAS_TOL) -> bool:
        pi = np.asarray(pi, dtype=float)
        return self.violation(pi) <= tol and abs(pi.sum() - 1.0) <= tol

    @cached_property
    def _initial(self):
        from .polytope import find_vertex
        return find_vertex(self)

    @property
    def is_feasible(self) -> bool:
        return self._initial is not None

    def initial_vertex(self) -> "VertexPolicy":
        v = self._initial
        if v is None:
            raise InfeasiblePolytopeError("feasible region is empty")
        return v

    def to_dict(self):
        if self.user_A is None:
            return {"B": [], "c": []}
        return {"B": self.user_A.tolist(), "c": self.user_b.tolist()}

    def __repr__(self):
        return f"FeasiblePolytope(K={self.n_arms}, rows={self.n_rows})"


@dataclass(frozen=True, eq=False)
class VertexPolicy:
    """An extreme point of F together with K active independent rows."""

    pi: np.ndarray
    basis: tuple

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        # round-off around zero (including -0.0) is snapped to exact 0
        pi = np.where(np.abs(pi) <= 1e-15, 0.0, pi)
        object.__setattr__(self, "pi", _frozen(pi))
        object.__setattr__(self, "basis", tuple(int(i) for i in self.basis))

    def residual(self, polytope: FeasiblePolytope) -> float:
        idx = list(self.basis)
        return float(np.max(np.abs(polytope.B[idx] @ self.pi - polytope.c[idx])))

    def check(self, polytope: FeasiblePolytope) -> list[str]:
        problems = []
        idx = list(self.basis)
        if len(idx) != polytope.n_arms:
            problems.append("basis size differs from number of arms")
            return problems
        if self.residual(polytope) > FEAS_TOL:
            problems.append("basis rows not active")
        if not polytope.contains(self.pi):
            problems.append("policy infeasible")
        if np.linalg.svd(polytope.B[idx], compute_uv=False)[-1] <= BASIS_SV_TOL:
            problems.append("basis rows dependent")
        return problems

    def same_as(self, other, tol=FEAS_TOL) -> bool:
        return bool(np.max(np.abs(self.pi - np.asarray(other.pi if isinstance(other, VertexPolicy) else other))) <= tol)


def check_allocation(w, polytope: FeasiblePolytope, scenario: ExplorationScenario) -> list[str]:
    w = np.asarray(w, dtype=float)
    problems = []
    if np.any(w < -FEAS_TOL):
        problems.append("negative weight")
    if abs(w.sum() - 1.0) > 1e-12 * max(1, len(w)):
        problems.append("weights do not sum to one")
    if ExplorationScenario(scenario) is ExplorationScenario.ANYTIME and polytope.violation(w) > FEAS_TOL:
        problems.append("allocation violates the constraints")
    return problems


def projection_onto_domain(raw_means, domain) -> np.ndarray:
    lo, hi = domain
    return np.clip(np.asarray(raw_means, dtype=float), lo, hi)


def validate_instance(instance: BanditInstance, polytope: FeasiblePolytope) -> list[str]:
    """List every violated invariant; an empty list means the pair is usable."""
    from .polytope import enumerate_neighbors, solve_optimal_policy

    report = []
    mu = instance.means
    if instance.n_arms < 2:
        report.append("fewer than two arms")
    if instance.n_arms != polytope.n_arms:
        report.append("arm count differs between instance and polytope")
        return report
    if not np.all(np.isfinite(mu)):
        report.append("non-finite means")
        return report
    lo, hi = instance.domain
    if np.any(mu < lo) or np.any(mu > hi):
        report.append("means outside domain")
    if not instance.family.is_gaussian and (lo <= 0 or hi >= 1):
        report.append("Bernoulli domain must lie inside (0, 1)")
    if not polytope.is_feasible:
        report.append("infeasible region")
        return report
    vertex = solve_optimal_policy(mu, polytope)
    nbrs = enumerate_neighbors(vertex, polytope)
    gaps = [float(mu @ (vertex.pi - n.vertex.pi)) for n in nbrs.neighbors]
    scale = max(1.0, float(np.max(np.abs(mu))))
    if any(g <= 1e-12 * scale for g in gaps):
        report.append("optimum not unique")
    return report


# JSON documents ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Problem:
    """Instance + polytope + exploration scenario, the unit loaded from JSON."""

    instance: BanditInstance
    polytope: FeasiblePolytope
    scenario: ExplorationScenario = ExplorationScenario.ANYTIME
    env_sigmas: np.ndarray | None = None

    def exploration_polytope(self) -> FeasiblePolytope:
        if ExplorationScenario(self.scenario) is ExplorationScenario.ANYTIME:
            return self.polytope
        return FeasiblePolytope.simplex(self.instance.n_arms)

    def to_dict(self):
        lo, hi = self.instance.domain
        d = {
            "means": self.instance.means.tolist(),
            "family": self.instance.family.to_dict(),
            "domain": [None if np.isinf(lo) else lo, None if np.isinf(hi) else hi],
            "constraints": self.polytope.to_dict(),
            "scenario": ExplorationScenario(self.scenario).value,
        }
        if self.env_sigmas is not None:
            d["env_sigma"] = list(map(float, self.env_sigmas))
        return d

    @classmethod
    def from_dict(cls, d):
        family = RewardFamily.from_dict(d["family"])
        dom = d.get("domain")
        inst = BanditInstance(d["means"], family, None if dom is None else tuple(dom))
        cons = d.get("constraints") or {}
        A = cons.get("B") or None
        poly = FeasiblePolytope(inst.n_arms, A, cons.get("c") if A else None)
        env = d.get("env_sigma")
        return cls(inst, poly, ExplorationScenario(d.get("scenario", "anytime")),
                   None if env is None else _frozen(env))


def load_problem(path) -> Problem:
    return Problem.from_dict(json.loads(Path(path).read_text()))


def dump_problem(problem: Problem, path=None) -> str:
    text = json.dumps(problem.to_dict(), indent=2)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text
