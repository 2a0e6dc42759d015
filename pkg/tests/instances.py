"""Random instance generators shared by the tests."""
import numpy as np

from conbandit.model import FeasiblePolytope, NonUniqueOptimumError
from conbandit.polytope import enumerate_neighbors, solve_optimal_policy


def random_polytope(rng, K, m, contains_uniform=False):
    """Simplex plus m random rows, nonempty by construction.

    Each row is made slack at a random interior point (or at the uniform
    point when `contains_uniform`), so F has full dimension.
    """
    A = rng.normal(size=(m, K))
    p = np.full(K, 1.0 / K) if contains_uniform else rng.dirichlet(np.ones(K))
    b = A @ p + rng.uniform(0.02, 0.3, size=m)
    return FeasiblePolytope(K, A, b), A, b


def random_instance(rng, k_max=6, n_max=14, contains_uniform=False, min_gap=1e-3):
    """(mu, polytope, A, b, optimum, neighbours) with a unique, well separated optimum."""
    while True:
        K = int(rng.integers(2, k_max + 1))
        m_max = n_max - (K + 2)
        m = int(rng.integers(0, m_max + 1)) if m_max > 0 else 0
        if m:
            poly, A, b = random_polytope(rng, K, m, contains_uniform)
        else:
            poly, A, b = FeasiblePolytope(K), None, None
        mu = rng.normal(size=K)
        try:
            opt = solve_optimal_policy(mu, poly)
            nbrs = enumerate_neighbors(opt, poly)
        except NonUniqueOptimumError:
            continue
        V = nbrs.directions()
        if len(nbrs) == 0 or np.min(V @ mu) <= min_gap:
            continue
        return mu, poly, A, b, opt, nbrs
