"""Information projections onto the alternative set.

For an optimal vertex pi* and a neighbour pi', write v = pi* - pi'.  The
alternative set is the union over neighbours of the half-spaces
{lam : lam . v < 0}; the cheapest way to reach the closure of one of them is
min sum_a w_a kl(mu_a, lam_a) subject to lam . v = 0.

Gaussians have a closed form.  Other families go through a one-dimensional
dual search: for a multiplier gamma each coordinate solves
w_a (lam_a - mu_a) = gamma v_a Var(lam_a) and gamma is adjusted until the
hyperplane equation holds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .divergences import kl, tilted_mean
from .model import ConvergenceError, FeasiblePolytope, NonUniqueOptimumError, RewardFamily, VertexPolicy
from .polytope import enumerate_neighbors, solve_optimal_policy

_PLANE_TOL = 1e-6
_NUMERIC_TOL = 1e-12
_NUMERIC_MAX_IT = 200


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    value: float
    neighbor: VertexPolicy | None
    lam: np.ndarray
    gamma: float | None = None
    degenerate: bool = False
    index: int = -1          # position of the neighbour in the NeighborSet


def _gaussian_batch(w, mu, V, sigma):
    """Closed form for every row of V at once.  Returns (value, lam, gamma, degenerate)."""
    gaps = V @ mu
    if w.min() > 0:
        inv_w = 1.0 / w
        denom = (V * V) @ inv_w
        gamma = np.where(gaps > 0, gaps / denom, 0.0)
        value = gaps * gamma / (2 * sigma ** 2)
        lam = mu[None, :] - gamma[:, None] * V * inv_w[None, :]
        return value, lam, gamma, np.zeros(len(gaps), bool)
    nz = V != 0
    zero_w = (w <= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_w = np.where(zero_w, 0.0, 1.0 / np.where(zero_w, 1.0, w))
    denom = (V * V) @ inv_w
    degenerate = np.any(nz & zero_w[None, :], axis=1)
    pos = (gaps > 0) & ~degenerate
    gamma = np.where(pos, gaps / np.where(denom > 0, denom, 1.0), 0.0)
    value = np.where(pos, gaps * gamma / (2 * sigma ** 2), 0.0)
    lam = mu[None, :] - gamma[:, None] * V * inv_w[None, :]
    if np.any(degenerate):
        for i in np.flatnonzero(degenerate):
            if gaps[i] <= 0:
                continue
            # a free coordinate absorbs the whole gap at no cost
            a = int(np.flatnonzero(nz[i] & zero_w)[0])
            lam[i] = mu
            lam[i, a] = mu[a] - gaps[i] / V[i, a]
    return value, lam, gamma, degenerate


def _numeric_batch(w, mu, V, family, lo, hi, g0=None):
    """Dual search for every row of V.  Returns (value, lam, gamma).

    `g0` (one multiplier per row of V) seeds the search; the bracket is then
    rebuilt around it, so a poor seed costs time but not accuracy.
    """
    n, K = V.shape
    gaps = V @ mu
    lam = np.tile(mu, (n, 1))
    value = np.zeros(n)
    gamma = np.zeros(n)
    rows = np.flatnonzero(gaps > 0)
    if rows.size == 0:
        return value, lam, gamma
    Vr = V[rows]
    zero_w = w <= 0
    safe_w = np.where(zero_w, 1.0, w)

    def evaluate_dense(g):
        k = g[:, None] * Vr / safe_w[None, :]
        lm, dl = tilted_mean(np.broadcast_to(mu, k.shape), k, family)
        dk = Vr / safe_w[None, :]
        dlam = dl * dk
        # coordinates with no weight jump to the box edge favoured by the sign
        if np.any(zero_w):
            push = g[:, None] * Vr
            edge = np.where(push > 0, hi, np.where(push < 0, lo, mu[None, :]))
            lm = np.where(zero_w[None, :], edge, lm)
            dlam = np.where(zero_w[None, :], 0.0, dlam)
        clipped = (lm <= lo) | (lm >= hi)
        lm = np.clip(lm, lo, hi)
        dlam = np.where(clipped, 0.0, dlam)
        r = np.sum(Vr * lm, axis=1)
        dr = np.sum(Vr * dlam, axis=1)
        return lm, r, dr

    if np.any(zero_w) and not (np.isfinite(lo) and np.isfinite(hi)):
        # a coordinate with no weight and an unbounded side makes the infimum zero
        free = zero_w[None, :] & (Vr != 0)
        has_free = free.any(axis=1)
        for j in np.flatnonzero(has_free):
            a = int(np.flatnonzero(free[j])[0])
            lam[rows[j], a] = mu[a] - gaps[rows[j]] / Vr[j, a]
        rows = rows[~has_free]
        Vr = Vr[~has_free]
        if rows.size == 0:
            return value, lam, gamma
    elif np.any(zero_w):
        # free coordinates at the box edge as g -> 0-: if they alone reach the
        # hyperplane the value is zero
        free = zero_w[None, :] & (Vr != 0)
        edge = np.where(Vr < 0, hi, lo)
        reach = np.sum(np.where(free, Vr * (edge - mu[None, :]), 0.0), axis=1)
        g_r = gaps[rows]
        done = free.any(axis=1) & (g_r + reach <= 0)
        for j in np.flatnonzero(done):
            theta = g_r[j] / -reach[j]
            lam[rows[j]] = np.where(free[j], mu + theta * (edge[j] - mu), mu)
        rows = rows[~done]
        Vr = Vr[~done]
        if rows.size == 0:
            return value, lam, gamma

    # r(g) increases from -inf to gaps > 0 on g <= 0; the root is bracketed by
    # g_lo (r < 0) and g_hi (r > 0).  Until some r < 0 is seen the lower end is
    # open and a failed Newton step doubles g instead of bisecting.
    cold = None
    if g0 is not None:
        cold = np.asarray(g0, dtype=float)[rows]
    if cold is None or not np.all(cold < 0):
        var0 = np.asarray(np.broadcast_to(
            np.maximum(mu * (1 - mu), 1e-12) if not family.is_gaussian else family.sigma ** 2, (K,)))
        scale = (Vr * Vr * var0[None, :]) @ (1.0 / safe_w)
        guess = -gaps[rows] / np.maximum(scale, 1e-300)
        cold = guess if cold is None else np.where(cold < 0, cold, guess)
    g = cold
    sparse = not np.any(zero_w)
    if sparse:
        # only coordinates with v_a != 0 move; work on those entries alone
        ri, ci = np.nonzero(Vr)
        vv = Vr[ri, ci]
        cc = vv / w[ci]
        mm = mu[ci]
        nr = rows.size

        def evaluate_sparse(g):
            lm, dl = tilted_mean(mm, g[ri] * cc, family)
            inside = (lm > lo) & (lm < hi)
            lm = np.clip(lm, lo, hi)
            r = np.bincount(ri, vv * lm, nr)
            dr = np.bincount(ri, np.where(inside, vv * cc * dl, 0.0), nr)
            return lm, r, dr
    evaluate = evaluate_sparse if sparse else evaluate_dense
    g_lo = np.full(rows.size, -np.inf)
    g_hi = np.zeros(rows.size)
    lm, r, dr = evaluate(g)
    for it in range(_NUMERIC_MAX_IT + 100):
        done = np.abs(r) <= _NUMERIC_TOL
        if np.all(done):
            break
        neg = r < 0
        g_lo = np.where(neg, g, g_lo)
        g_hi = np.where(neg, g_hi, g)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = g - r / dr
        ok = np.isfinite(newton) & (newton > g_lo) & (newton < g_hi) & (dr > 0)
        fallback = np.where(np.isfinite(g_lo), 0.5 * (g_lo + g_hi), 2.0 * g_hi)
        g = np.where(done, g, np.where(ok, newton, fallback))
        lm, r, dr = evaluate(g)
    if np.max(np.abs(r)) > 1e-9:
        raise ConvergenceError(f"projection residual {np.max(np.abs(r)):.3e} after {_NUMERIC_MAX_IT} steps")
    gamma[rows] = g
    if sparse:
        lam[rows[ri], ci] = lm
        value[rows] = np.bincount(ri, w[ci] * kl(mm, lm, family), nr)
    else:
        lam[rows] = lm
        value[rows] = np.sum(w[None, :] * kl(np.broadcast_to(mu, lm.shape), lm, family), axis=1)
    return value, lam, gamma


def _paper_gamma(gamma, family):
    # report gamma in the form lam = mu - gamma * v / w
    return -gamma * family.sigma ** 2 if family.is_gaussian else -gamma


def project_gaussian(w, means, optimal, neighbor, sigma, domain=None):
    """Closed-form Gaussian projection onto the hyperplane of one neighbour.

    Returns (lam, value, gamma) with lam_a = mu_a - gamma v_a / w_a.
    """
    w = np.asarray(w, dtype=float)
    mu = np.asarray(means, dtype=float)
    v = np.asarray(_pi(optimal)) - np.asarray(_pi(neighbor))
    value, lam, gamma, _ = _gaussian_batch(w, mu, v[None, :], sigma)
    lam = lam[0]
    if domain is not None:
        lam, value0 = _clip_then_resolve(w, mu, v, lam, float(value[0]), RewardFamily.gaussian(sigma), domain)
        return lam, value0, float(gamma[0])
    return lam, float(value[0]), float(gamma[0])


def _clip_then_resolve(w, mu, v, lam, value, family, domain):
    lo, hi = domain
    clipped = np.clip(lam, lo, hi)
    if abs(clipped @ v) <= _PLANE_TOL:
        return clipped, float(np.sum(w * kl(mu, clipped, family)))
    val, lm, _ = _numeric_batch(w, mu, v[None, :], family, lo, hi)
    return lm[0], float(val[0])


def project_numeric(w, means, optimal, neighbor, family: RewardFamily, domain=None):
    """Numeric projection (any family).  Returns (lam, value)."""
    w = np.asarray(w, dtype=float)
    mu = np.asarray(means, dtype=float)
    v = np.asarray(_pi(optimal)) - np.asarray(_pi(neighbor))
    lo, hi = domain if domain is not None else family.default_domain()
    value, lam, _ = _numeric_batch(w, mu, v[None, :], family, lo, hi)
    return lam[0], float(value[0])


def _pi(x):
    return x.pi if isinstance(x, VertexPolicy) else x


class AltSet:
    """Per-run evaluator of D(w, mu, F) with neighbour memoisation.

    The optimal vertex is warm-started from the previous call: if every cached
    neighbour still has a strictly positive gap the vertex is unchanged.
    """

    def __init__(self, polytope: FeasiblePolytope, family: RewardFamily, domain=None, tie_tol=1e-12):
        self.polytope = polytope
        self.family = family
        self.domain = domain if domain is not None else family.default_domain()
        self.tie_tol = tie_tol
        self._cache: dict = {}
        self._current = None   # (vertex, NeighborSet, V)

    def _entry(self, vertex):
        key = tuple(np.round(vertex.pi, 12))
        hit = self._cache.get(key)
        if hit is None:
            nbrs = enumerate_neighbors(vertex, self.polytope)
            hit = (vertex, nbrs, nbrs.directions())
            if len(self._cache) > 512:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def optimum(self, means):
        """(vertex, NeighborSet, V, gaps, unique) for these means."""
        mu = np.asarray(means, dtype=float)
        tol = self.tie_tol * max(1.0, float(np.max(np.abs(mu))))
        if self._current is not None:
            vertex, nbrs, V = self._current
            gaps = V @ mu
            if gaps.size == 0 or np.min(gaps) > tol:
                return vertex, nbrs, V, gaps, True
            start = vertex
        else:
            start = None
        vertex = solve_optimal_policy(mu, self.polytope, start)
        vertex, nbrs, V = self._entry(vertex)
        self._current = (vertex, nbrs, V)
        gaps = V @ mu
        return vertex, nbrs, V, gaps, bool(gaps.size == 0 or np.min(gaps) > tol)

    def per_neighbor(self, w, means, V=None, warm=None):
        """Values and confusing instances for every neighbour (no uniqueness check).

        `warm` is an optional dict owned by the caller; numeric searches store
        their multipliers there and reuse them while V stays the same.
        """
        mu = np.asarray(means, dtype=float)
        w = np.asarray(w, dtype=float)
        if V is None:
            V = self.optimum(mu)[2]
        lo, hi = self.domain
        if self.family.is_gaussian:
            value, lam, gamma, _ = _gaussian_batch(w, mu, V, self.family.sigma)
            if np.isfinite(lo) or np.isfinite(hi):
                clipped = np.clip(lam, lo, hi)
                off = np.abs(np.sum(clipped * V, axis=1)) > _PLANE_TOL
                lam = clipped
                value = np.sum(w[None, :] * kl(np.broadcast_to(mu, lam.shape), lam, self.family), axis=1)
                if off.any():
                    v2, l2, _ = _numeric_batch(w, mu, V[off], self.family, lo, hi)
                    value[off] = v2
                    lam[off] = l2
            return value, lam, gamma
        g0 = None
        if warm is not None and warm.get("V") is V:
            g0 = warm["g"]
        value, lam, gamma = _numeric_batch(w, mu, V, self.family, lo, hi, g0)
        if warm is not None:
            warm["V"] = V
            warm["g"] = gamma
        return value, lam, _paper_gamma(gamma, self.family)

    def evaluate(self, w, means, strict=True) -> ProjectionResult:
        vertex, nbrs, V, gaps, unique = self.optimum(means)
        if not unique:
            if strict:
                raise NonUniqueOptimumError("optimal policy is not unique at these means")
            return ProjectionResult(0.0, None, np.asarray(means, dtype=float).copy(), None, False, -1)
        value, lam, gamma = self.per_neighbor(w, means, V)
        j = int(np.argmin(value))
        w = np.asarray(w, dtype=float)
        degenerate = bool(np.any((w <= 0) & (V[j] != 0)))
        return ProjectionResult(float(value[j]), nbrs.neighbors[j].vertex, lam[j], float(gamma[j]),
                                degenerate, j)


def alt_value(w, means, polytope: FeasiblePolytope, family: RewardFamily, domain=None) -> ProjectionResult:
    """D(w, mu, F): minimum projection value over the neighbours of pi*(mu)."""
    return AltSet(polytope, family, domain).evaluate(w, means)
