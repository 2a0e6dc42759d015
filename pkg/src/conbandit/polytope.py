"""Linear programming over F, neighbouring vertices and Euclidean projections.

The LP solver is a dense vertex-walking simplex in inequality form
(maximise obj . x subject to A x <= b).  Every iterate is a vertex described
by n active, independent rows.  A basis row with a negative dual multiplier is
released along its edge; the first blocking row enters.  Both choices use the
lowest row index among candidates (Bland's rule), which makes the walk finite
under degeneracy and deterministic under ties.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.optimize import linprog, lsq_linear, nnls

from .model import (
    BASIS_SV_TOL,
    FEAS_TOL,
    DegenerateBasisError,
    FeasiblePolytope,
    InfeasiblePolytopeError,
    VertexPolicy,
)

_DIR_TOL = 1e-12
_MAX_PIVOTS = 10_000
_MAX_BASES = 200_000


class _Unbounded(Exception):
    pass


def _walk(A, b, obj, basis, fixed=frozenset(), skip=frozenset()):
    """Vertex walk from the vertex defined by `basis` to an optimum.

    `fixed` rows never leave the basis (equalities), `skip` rows never enter.
    """
    n = A.shape[1]
    basis = list(basis)
    x = np.linalg.solve(A[basis], b[basis])
    ytol = 1e-12 * max(1.0, float(np.max(np.abs(obj))))
    allowed = np.ones(A.shape[0], bool)
    allowed[list(skip)] = False
    row_norm = np.linalg.norm(A, axis=1)
    for _ in range(_MAX_PIVOTS):
        Bm = A[basis]
        y = np.linalg.solve(Bm.T, obj)
        leave = None
        for pos in sorted(range(n), key=lambda p: basis[p]):
            if basis[pos] not in fixed and y[pos] < -ytol:
                leave = pos
                break
        if leave is None:
            return x, basis
        e = np.zeros(n)
        e[leave] = 1.0
        d = -np.linalg.solve(Bm, e)
        ad = A @ d
        # pivots below rounding level of the row would give a singular basis
        mask = (ad > _DIR_TOL * np.maximum(1.0, 1e3 * row_norm * np.linalg.norm(d))) & allowed
        mask[basis] = False
        if not mask.any():
            raise _Unbounded
        idx = np.flatnonzero(mask)
        slack = np.maximum(b[idx] - A[idx] @ x, 0.0)
        ratios = slack / ad[idx]
        tmin = ratios.min()
        enter = int(idx[ratios <= tmin + 1e-12].min())
        basis[leave] = enter
        x = np.linalg.solve(A[basis], b[basis])
    raise RuntimeError("simplex pivot limit reached")


def _independent_subset(rows, order, start=()):
    """Greedy (in `order`) maximal subset of rows independent of `start`."""
    chosen = list(start)
    for i in order:
        if i in chosen:
            continue
        trial = chosen + [i]
        if np.linalg.matrix_rank(rows[trial], tol=1e-9) == len(trial):
            chosen = trial
    return chosen


def _crossover(A, b, x, obj=None, fixed_first=(), skip=frozenset()):
    """Move from a feasible point to a vertex, never decreasing obj."""
    n = A.shape[1]
    m = A.shape[0]
    allowed = np.ones(m, bool)
    allowed[list(skip)] = False
    slack = b - A @ x
    active = [i for i in range(m) if allowed[i] and slack[i] <= FEAS_TOL]
    start = [i for i in fixed_first if i in active]
    basis = _independent_subset(A, active, _independent_subset(A, start))
    while len(basis) < n:
        if basis:
            _, s, vt = np.linalg.svd(A[basis])
            Z = vt[len(basis):].T
        else:
            Z = np.eye(n)
        if obj is not None:
            d = Z @ (Z.T @ obj)
            if np.linalg.norm(d) < 1e-12:
                d = Z[:, 0]
        else:
            d = Z[:, 0]
        hit = None
        for direction in (d, -d):
            ad = A @ direction
            mask = (ad > _DIR_TOL) & allowed
            mask[basis] = False
            if not mask.any():
                continue
            idx = np.flatnonzero(mask)
            sl = np.maximum(b[idx] - A[idx] @ x, 0.0)
            ratios = sl / ad[idx]
            tmin = ratios.min()
            hit = (direction, tmin, int(idx[ratios <= tmin + 1e-12].min()))
            break
        if hit is None:
            raise _Unbounded
        direction, tmin, row = hit
        x = x + tmin * direction
        basis.append(row)
    basis = sorted(basis)
    x = np.linalg.solve(A[basis], b[basis])
    return x, basis


def find_vertex(polytope: FeasiblePolytope):
    """Some vertex of F, or None when F is empty.

    Phase one minimises a uniform slack s on A x - s <= b, 0 <= s <= s0, starting
    from the barycentre of the simplex.
    """
    A, b = np.asarray(polytope.B), np.asarray(polytope.c)
    K = polytope.n_arms
    if np.any(np.all(A == 0, axis=1) & (b < 0)):
        return None
    x0 = np.full(K, 1.0 / K)
    viol = float(np.max(A @ x0 - b))
    fixed = set(polytope.eq_rows)
    skip = set(polytope.shadow_rows)
    if viol > FEAS_TOL:
        s0 = viol + 1.0
        m = A.shape[0]
        Aux = np.zeros((m + 2, K + 1))
        Aux[:m, :K] = A
        Aux[:m, K] = -1.0
        Aux[m, K] = -1.0      # s >= 0
        Aux[m + 1, K] = 1.0   # s <= s0
        baux = np.concatenate([b, [0.0, s0]])
        obj = np.zeros(K + 1)
        obj[K] = -1.0
        z, basis = _crossover(Aux, baux, np.append(x0, s0), obj)
        z, basis = _walk(Aux, baux, obj, basis)
        if z[K] > FEAS_TOL:
            return None
        x0 = z[:K]
    x, basis = _crossover(A, b, x0, None, fixed_first=sorted(fixed), skip=skip)
    if np.max(A @ x - b) > 10 * FEAS_TOL:
        return None
    return VertexPolicy(x, tuple(sorted(basis)))


def solve_lp(objective, polytope: FeasiblePolytope, start: VertexPolicy | None = None) -> VertexPolicy:
    """Vertex of F maximising objective . pi."""
    if not polytope.is_feasible:
        raise InfeasiblePolytopeError("feasible region is empty")
    v0 = start if start is not None else polytope.initial_vertex()
    obj = np.asarray(objective, dtype=float)
    A, b = np.asarray(polytope.B), np.asarray(polytope.c)
    try:
        x, basis = _walk(A, b, obj, v0.basis, set(polytope.eq_rows), set(polytope.shadow_rows))
    except _Unbounded:  # pragma: no cover - F is inside the simplex
        raise RuntimeError("LP over F reported unbounded")
    return VertexPolicy(x, tuple(sorted(basis)))


def max_floor(polytope: FeasiblePolytope) -> float:
    """Largest s such that some pi in F has every coordinate at least s."""
    K = polytope.n_arms
    B = np.asarray(polytope.B)
    # variables (pi, s): B pi <= c and s - pi_a <= 0
    A_ub = np.vstack([np.hstack([B, np.zeros((B.shape[0], 1))]),
                      np.hstack([-np.eye(K), np.ones((K, 1))])])
    b_ub = np.concatenate([np.asarray(polytope.c), np.zeros(K)])
    obj = np.zeros(K + 1)
    obj[K] = -1.0
    res = linprog(obj, A_ub=A_ub, b_ub=b_ub, bounds=[(0, 1)] * K + [(0, 1.0 / K)], method="highs")
    if res.status != 0:
        raise InfeasiblePolytopeError("feasible region is empty")
    return max(0.0, float(res.x[K]))


def solve_optimal_policy(means, polytope: FeasiblePolytope, start: VertexPolicy | None = None) -> VertexPolicy:
    """Deterministic LP optimum max mu . pi over F (one vertex, Bland ties)."""
    return solve_lp(means, polytope, start)


@dataclass(frozen=True, eq=False)
class Neighbor:
    vertex: VertexPolicy
    relaxed_row: int        # row of the origin basis released along the edge
    origin_basis: tuple     # basis at the origin the edge was taken from


@dataclass(frozen=True, eq=False)
class NeighborSet:
    origin: VertexPolicy
    neighbors: tuple

    def __len__(self):
        return len(self.neighbors)

    def directions(self) -> np.ndarray:
        """Rows pi* - pi' for every neighbour."""
        if not self.neighbors:
            return np.zeros((0, len(self.origin.pi)))
        return np.array([self.origin.pi - n.vertex.pi for n in self.neighbors])


def active_bases(vertex: VertexPolicy, polytope: FeasiblePolytope) -> list[tuple]:
    """All sets of K independent active rows at `vertex` that contain the
    equality representatives."""
    A, b = np.asarray(polytope.B), np.asarray(polytope.c)
    K = polytope.n_arms
    slack = b - A @ vertex.pi
    fixed = list(polytope.eq_rows)
    skip = set(polytope.shadow_rows) | set(fixed)
    free = [i for i in range(len(b)) if i not in skip and abs(slack[i]) <= FEAS_TOL]
    need = K - len(fixed)
    if need < 0 or len(free) < need:
        raise DegenerateBasisError("degenerate basis: not enough active rows")
    bases = []
    for count, combo in enumerate(combinations(free, need)):
        if count > _MAX_BASES:
            raise DegenerateBasisError("too many active rows to enumerate bases")
        rows = fixed + list(combo)
        if np.linalg.svd(A[rows], compute_uv=False)[-1] > BASIS_SV_TOL:
            bases.append(tuple(sorted(rows)))
    if not bases:
        raise DegenerateBasisError("degenerate basis: active rows have no independent subset")
    return bases


def enumerate_neighbors(vertex: VertexPolicy, polytope: FeasiblePolytope) -> NeighborSet:
    """Vertices adjacent to `vertex` along the edges of F.

    Each basis row is released along d = -B_hat^{-1} e_r and the first blocking
    row is entered.  With degeneracy every independent active basis is tried and
    zero-length edges are skipped; results are deduplicated.
    """
    A, b = np.asarray(polytope.B), np.asarray(polytope.c)
    x = np.asarray(vertex.pi)
    fixed = set(polytope.eq_rows)
    allowed = np.ones(len(b), bool)
    allowed[list(polytope.shadow_rows)] = False
    found: list[Neighbor] = []
    for basis in active_bases(vertex, polytope):
        Bm = A[list(basis)]
        Binv = np.linalg.inv(Bm)
        for pos, r in enumerate(basis):
            if r in fixed:
                continue
            d = -Binv[:, pos]
            ad = A @ d
            mask = (ad > _DIR_TOL) & allowed
            mask[list(basis)] = False
            if not mask.any():
                raise RuntimeError("unbounded edge in a compact polytope")
            idx = np.flatnonzero(mask)
            sl = np.maximum(b[idx] - A[idx] @ x, 0.0)
            ratios = sl / ad[idx]
            tmin = ratios.min()
            if tmin * np.linalg.norm(d) <= 1e-10:
                continue
            enter = int(idx[ratios <= tmin + 1e-12].min())
            nb = sorted(set(basis) - {r} | {enter})
            y = np.linalg.solve(A[nb], b[nb])
            if any(np.max(np.abs(y - f.vertex.pi)) <= FEAS_TOL for f in found):
                continue
            if np.max(np.abs(y - x)) <= FEAS_TOL:
                continue
            found.append(Neighbor(VertexPolicy(y, tuple(nb)), int(r), tuple(basis)))
    return NeighborSet(vertex, tuple(found))


# Projections --------------------------------------------------------------

def _nullspace(E):
    _, s, vt = np.linalg.svd(E)
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0] if s.size else 1.0)))
    return vt[rank:].T


def _ldp(G, h):
    """min ||v|| subject to G v <= h, via the NNLS dual.  None if empty.

    scipy's nnls occasionally stops early while reporting success, so the
    NNLS optimality conditions are checked and BVLS (lsq_linear) takes over
    when they fail.
    """
    if G.shape[0] == 0 or np.all(h >= 0):
        return np.zeros(G.shape[1])
    n = G.shape[1]
    # standard LDP form  -G v >= -h
    E = np.vstack([-G.T, -h[None, :]])
    f = np.zeros(n + 1)
    f[n] = 1.0
    u, _ = nnls(E, f, maxiter=50 * E.shape[1] + 100)
    if not _nnls_optimal(E, f, u):
        u = lsq_linear(E, f, bounds=(0.0, np.inf), method="bvls", tol=1e-15).x
    r = E @ u - f
    if np.linalg.norm(r) < 1e-12 or r[n] >= -1e-14:
        return None
    return -r[:n] / r[n]


def _nnls_optimal(E, f, u, tol=1e-10):
    grad = E.T @ (E @ u - f)
    scale = max(1.0, float(np.max(np.abs(E))) ** 2 * max(1.0, float(np.max(u, initial=0.0))))
    pos = u > 0
    return bool(np.all(grad >= -tol * scale) and np.all(np.abs(grad[pos]) <= tol * scale))


def euclidean_project(point, A=None, b=None, lower=None, E=None, f=None, weights=None,
                      tol=1e-8):
    """Projection of `point` onto {x : A x <= b, x >= lower, E x = f}.

    With `weights` the metric is sum_a weights_a (x_a - point_a)^2.  The problem
    is reduced to a least-distance program on the null space of the equalities
    and solved by NNLS; an active-set Newton polish on the KKT system follows.
    Raises InfeasiblePolytopeError if the set is empty.
    """
    p = np.asarray(point, dtype=float)
    n = p.size
    G_list, h_list = [], []
    if A is not None and len(A):
        G_list.append(np.atleast_2d(np.asarray(A, dtype=float)))
        h_list.append(np.atleast_1d(np.asarray(b, dtype=float)))
    if lower is not None:
        lw = np.broadcast_to(np.asarray(lower, dtype=float), (n,))
        fin = np.isfinite(lw)
        G_list.append(-np.eye(n)[fin])
        h_list.append(-lw[fin])
    G = np.vstack(G_list) if G_list else np.zeros((0, n))
    h = np.concatenate(h_list) if h_list else np.zeros(0)
    s = np.sqrt(np.asarray(weights, dtype=float)) if weights is not None else np.ones(n)
    # y = s * x ; target q = s * p
    Gy = G / s
    q = s * p
    if E is not None:
        Ey = np.atleast_2d(np.asarray(E, dtype=float)) / s
        fy = np.atleast_1d(np.asarray(f, dtype=float))
        u0 = np.linalg.lstsq(Ey, fy - Ey @ q, rcond=None)[0]
        Z = _nullspace(Ey)
    else:
        Ey = np.zeros((0, n))
        fy = np.zeros(0)
        u0 = np.zeros(n)
        Z = np.eye(n)
    hv = h - Gy @ (q + u0)
    Gv = Gy @ Z
    v = _ldp(Gv, hv)
    if v is None:
        raise InfeasiblePolytopeError("projection target set is empty")
    y = q + u0 + Z @ v
    y = _polish(y, q, Gy, h, Ey, fy)
    x = y / s
    if G.shape[0] and np.max(G @ x - h) > 1e-9:
        viol = np.max(G @ x - h)
        if viol > 1e-6:
            raise InfeasiblePolytopeError(f"projection could not reach the set (violation {viol:.2e})")
    return x


def _polish(y, q, G, h, E, f):
    """Re-solve the KKT system on the detected active set; keep it if valid."""
    res = G @ y - h if G.shape[0] else np.zeros(0)
    scale = max(1.0, float(np.max(np.abs(y))))
    act = np.flatnonzero(res >= -1e-9 * scale)
    C = np.vstack([E, G[act]]) if act.size else E
    d = np.concatenate([f, h[act]]) if act.size else f
    if C.shape[0] == 0:
        return q
    # min ||y - q|| s.t. C y = d  ->  y = q - C^T nu, with C C^T nu = C q - d
    M = C @ C.T
    try:
        nu = np.linalg.lstsq(M, C @ q - d, rcond=None)[0]
    except np.linalg.LinAlgError:  # pragma: no cover
        return y
    y2 = q - C.T @ nu
    mult = nu[E.shape[0]:]
    ok_feas = (not G.shape[0]) or np.max(G @ y2 - h) <= 1e-12 * scale
    ok_eq = (not E.shape[0]) or np.max(np.abs(E @ y2 - f)) <= 1e-12 * scale
    if ok_feas and ok_eq and (mult.size == 0 or np.min(mult) >= -1e-9):
        return y2
    return y


def simplex_project(point, floor=0.0):
    """Euclidean projection onto {w : sum w = 1, w >= floor} (sort based)."""
    p = np.asarray(point, dtype=float)
    K = p.size
    mass = 1.0 - K * floor
    if mass < -1e-15:
        raise InfeasiblePolytopeError("floor too large for the simplex")
    y = p - floor
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - mass
    ks = np.arange(1, K + 1)
    cond = u - css / ks > 0
    rho = int(np.flatnonzero(cond)[-1]) + 1
    theta = css[rho - 1] / rho
    return np.maximum(y - theta, 0.0) + floor


def project_onto_polytope(point, polytope: FeasiblePolytope, floor=0.0, weights=None, cache=None):
    """Projection onto F intersected with {w_a >= floor} (Euclidean unless
    `weights` is given)."""
    K = polytope.n_arms
    if polytope.is_simplex and weights is None:
        return simplex_project(point, floor)
    extra = polytope.extra_rows
    A = np.asarray(polytope.B)[extra]
    b = np.asarray(polytope.c)[extra]
    return euclidean_project(point, A, b, lower=np.full(K, floor), E=np.ones((1, K)), f=[1.0],
                             weights=weights)


class Projector:
    """Projection onto Pi intersected with {w >= floor}, warm-started from the
    active set of the previous call.

    The guessed active set is tested by solving its KKT system directly
    (free coordinates only, lower bounds eliminated); the answer is accepted
    when it is feasible and every inequality multiplier is nonnegative.
    Otherwise the NNLS route runs and its active set is remembered.  Keep one
    instance per run: the warm state only affects speed.
    """

    def __init__(self, polytope: FeasiblePolytope):
        self.poly = polytope
        self.K = polytope.n_arms
        extra = polytope.extra_rows
        self.A = np.asarray(polytope.B)[extra]
        self.b = np.asarray(polytope.c)[extra]
        self.rows = ()
        self.low = ()
        self.calls = 0
        self.warm_hits = 0

    def _kkt(self, p, h, floor, rows, low):
        K = self.K
        free = np.ones(K, bool)
        free[list(low)] = False
        if not free.any():
            return None
        A_S = self.A[list(rows)] if rows else np.zeros((0, K))
        C = np.vstack([np.ones((1, K)), A_S])
        d = np.concatenate([[1.0], self.b[list(rows)]]) if rows else np.array([1.0])
        CL = C[:, ~free]
        CF = C[:, free]
        dd = d - CL.sum(axis=1) * floor
        hF = h[free]
        M = (CF / hF) @ CF.T
        rhs = CF @ p[free] - dd
        try:
            nu = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            return None
        w = np.empty(K)
        w[~free] = floor
        w[free] = p[free] - (CF.T @ nu) / hF
        # multipliers: extra rows nu[1:], lower bounds from stationarity
        if rows and np.min(nu[1:]) < -1e-12:
            return None
        if low:
            mu_low = h[~free] * (floor - p[~free]) + CL.T @ nu
            if np.min(mu_low) < -1e-12:
                return None
        if np.min(w) < floor - 1e-12:
            return None
        if self.A.shape[0] and np.max(self.A @ w - self.b) > 1e-12:
            return None
        return w

    def __call__(self, point, floor=0.0, weights=None):
        self.calls += 1
        p = np.asarray(point, dtype=float)
        if self.A.shape[0] == 0 and weights is None:
            return simplex_project(p, floor)
        h = np.ones(self.K) if weights is None else np.asarray(weights, dtype=float)
        w = self._kkt(p, h, floor, self.rows, self.low)
        if w is not None:
            self.warm_hits += 1
            return w
        w0 = euclidean_project(p, self.A, self.b, lower=np.full(self.K, floor), E=np.ones((1, self.K)),
                               f=[1.0], weights=weights)
        rows = tuple(int(i) for i in np.flatnonzero(self.A @ w0 - self.b >= -1e-10)) if self.A.shape[0] else ()
        low = tuple(int(i) for i in np.flatnonzero(w0 - floor <= 1e-10))
        w = self._kkt(p, h, floor, rows, low)
        if w is None:
            return w0
        self.rows, self.low = rows, low
        return w
