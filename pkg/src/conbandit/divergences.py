"""KL divergences, tilted means and confidence-interval inversion for the
Gaussian (known shared variance) and Bernoulli families.

All functions broadcast over numpy arrays.
"""
import numpy as np

from .model import RewardFamily

_CLAMP = 1e-9


def _bernoulli_kl(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(x > 0, x * np.log(x / y), 0.0)
        t2 = np.where(x < 1, (1 - x) * np.log((1 - x) / (1 - y)), 0.0)
        out = t1 + t2
    out = np.where(x == y, 0.0, out)
    # y on the boundary with x != y: infinite divergence
    out = np.where(((y <= 0) | (y >= 1)) & (x != y), np.inf, out)
    return np.maximum(out, 0.0)


def kl(x, y, family: RewardFamily):
    """kl(x, y) between the members of `family` with means x and y.

    Bernoulli returns +inf when y is 0 or 1 and x differs from it.
    """
    if family.is_gaussian:
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        out = d * d / (2.0 * family.sigma ** 2)
    else:
        out = _bernoulli_kl(x, y)
    return out if np.ndim(out) else float(out)


def binary_kl(p, q) -> float:
    p = float(p)
    q = float(q)
    if not (0 < p < 1 and 0 < q < 1):
        raise ValueError(f"binary_kl needs p, q in (0, 1), got {p}, {q}")
    return float(_bernoulli_kl(p, q))


def variance(lam, family: RewardFamily):
    """Variance of the family member with mean lam."""
    if family.is_gaussian:
        return np.full_like(np.asarray(lam, dtype=float), family.sigma ** 2)
    lam = np.asarray(lam, dtype=float)
    return lam * (1 - lam)


def tilted_mean(mu, k, family: RewardFamily):
    """Minimiser over lam of kl(mu, lam) - k * lam, and its derivative in k.

    The stationarity condition is lam - mu = k * Var(lam).  For Bernoulli this
    is a quadratic whose root in [0, 1] is written in a cancellation-free form.
    """
    mu = np.asarray(mu, dtype=float)
    k = np.asarray(k, dtype=float)
    if family.is_gaussian:
        s2 = family.sigma ** 2
        lam = mu + k * s2
        return lam, np.full_like(lam, s2)
    one_k = 1.0 - k
    root = np.sqrt(np.maximum(one_k * one_k + 4.0 * k * mu, 0.0))
    # pick the algebraically stable expression for the root in [0, 1]
    pos = one_k >= 0
    lam = np.where(pos, 2.0 * mu / np.where(pos, one_k + root, 1.0),
                   (root - one_k) / np.where(pos, 1.0, 2.0 * k))
    lam = np.clip(lam, 0.0, 1.0)
    # implicit differentiation: the quadratic's slope at its root is the root of the discriminant
    dlam = lam * (1 - lam) / np.maximum(root, 1e-300)
    return lam, dlam


def _bernoulli_inverse(mean, level, upper, lo, hi, iters=100, x0=None):
    """Solve kl(mean, xi) = level for xi on one side of mean.

    In the natural parameter x = logit(xi), kl(mean, xi) is
    H(mean) - mean * x + log(1 + e^x): convex, with slope xi - mean.  Newton
    started from the far edge is therefore monotone and never leaves the
    bracket [logit mean, edge]; the bracket is still enforced and halved if a
    step fails to make progress.  `x0` (logits) seeds the search; from the
    near side one tangent step lands on the far side, after which the same
    monotone argument applies.
    """
    mean = np.asarray(mean, dtype=float)
    level = np.asarray(level, dtype=float)
    edge = np.where(upper, hi, lo)
    kl_edge = _bernoulli_kl(mean, edge)
    out = edge.copy()
    todo = kl_edge > level
    if not np.any(todo):
        return out
    m = mean[todo]
    lv = level[todo]
    neg_h = m * np.log(m) + (1 - m) * np.log1p(-m)
    a = np.log(m / (1 - m))
    e = edge[todo]
    b = np.log(e / (1 - e))
    x = b.copy()
    if x0 is not None:
        seed = np.asarray(x0, dtype=float)[todo]
        good = np.isfinite(seed) & (np.minimum(a, b) < seed) & (seed < np.maximum(a, b))
        x = np.where(good, seed, x)
    for _ in range(iters):
        soft = np.logaddexp(0.0, x)
        f = neg_h - m * x + soft - lv
        # stop at the rounding level of f, so tiny levels are still resolved
        tol = 8 * np.finfo(float).eps * (np.abs(neg_h) + np.abs(m * x) + soft + lv)
        if np.all(np.abs(f) <= tol):
            break
        slope = 1.0 / (1.0 + np.exp(-x)) - m
        # f > 0 means x is beyond the root: move the far end of the bracket
        far = f > 0
        b = np.where(far, x, b)
        a = np.where(far, a, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x - f / slope
        ok = np.isfinite(step) & (np.minimum(a, b) < step) & (step < np.maximum(a, b))
        x = np.where(np.abs(f) <= tol, x, np.where(ok, step, 0.5 * (a + b)))
    # one more tangent step takes the converged points to full precision
    f = neg_h - m * x + np.logaddexp(0.0, x) - lv
    slope = 1.0 / (1.0 + np.exp(-x)) - m
    with np.errstate(divide="ignore", invalid="ignore"):
        step = x - f / slope
    ok = np.isfinite(step) & (np.abs(step - x) <= 1e-6 * (1.0 + np.abs(x)))
    x = np.where(ok, step, x)
    out[todo] = 1.0 / (1.0 + np.exp(-x))
    return out


def confidence_interval(mean_hat, count, radius, family: RewardFamily, domain=None, warm=None):
    """Endpoints of {xi : count * kl(mean_hat, xi) <= radius}, clipped to `domain`.

    Works elementwise on arrays.  Returns (alpha, beta).  `warm` is an
    optional dict owned by the caller that keeps the last Bernoulli endpoints
    to seed the next solve.
    """
    mean_hat = np.asarray(mean_hat, dtype=float)
    count = np.asarray(count, dtype=float)
    radius = np.asarray(radius, dtype=float)
    if np.any(count < 1) or np.any(radius < 0):
        raise ValueError("count must be >= 1 and radius >= 0")
    if domain is None:
        domain = family.default_domain()
    lo, hi = domain
    level = np.broadcast_to(radius / count, np.broadcast(mean_hat, count, radius).shape)
    mean_b = np.broadcast_to(mean_hat, level.shape)
    if family.is_gaussian:
        half = np.sqrt(2.0 * family.sigma ** 2 * level)
        alpha, beta = mean_b - half, mean_b + half
    else:
        m = np.clip(mean_b, _CLAMP, 1 - _CLAMP)
        blo = max(lo, _CLAMP)
        bhi = min(hi, 1 - _CLAMP)
        flat_m = np.atleast_1d(m).ravel()
        flat_l = np.atleast_1d(level).ravel()
        n = flat_m.size
        both_m = np.concatenate([flat_m, flat_m])
        both_l = np.concatenate([flat_l, flat_l])
        upper = np.arange(2 * n) < n
        x0 = None
        if warm is not None and warm.get("x") is not None and warm["x"].size == 2 * n:
            x0 = warm["x"]
        ends = _bernoulli_inverse(both_m, both_l, upper, blo, bhi, x0=x0)
        if warm is not None:
            with np.errstate(divide="ignore"):
                warm["x"] = np.log(ends / (1 - ends))
        beta = ends[:n].reshape(np.shape(m))
        alpha = ends[n:].reshape(np.shape(m))
        zero = level <= 0
        alpha = np.where(zero, mean_b, alpha)
        beta = np.where(zero, mean_b, beta)
    alpha = np.clip(alpha, lo, hi)
    beta = np.clip(beta, lo, hi)
    if alpha.ndim == 0:
        return float(alpha), float(beta)
    return alpha, beta


class KlEvaluator:
    """Small convenience wrapper binding the functions above to one family."""

    def __init__(self, family: RewardFamily, domain=None):
        self.family = family
        self.domain = domain if domain is not None else family.default_domain()

    def kl(self, x, y):
        return kl(x, y, self.family)

    def interval(self, mean_hat, count, radius):
        return confidence_interval(mean_hat, count, radius, self.family, self.domain)

    def tilted_mean(self, mu, k):
        return tilted_mean(mu, k, self.family)
