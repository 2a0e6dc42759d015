import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conbandit.divergences import KlEvaluator, binary_kl, confidence_interval, kl, tilted_mean
from conbandit.model import RewardFamily

from oracles import bernoulli_kl_direct, gaussian_kl_quad

G1 = RewardFamily.gaussian(1.0)
BER = RewardFamily.bernoulli()


def test_gaussian_unit_gap():
    assert kl(1.0, 0.0, G1) == 0.5


def test_bernoulli_reference_value():
    assert kl(0.1, 0.9, BER) == pytest.approx(1.757779, abs=1e-6)
    assert kl(0.1, 0.9, BER) == pytest.approx(bernoulli_kl_direct(0.1, 0.9), rel=1e-14)


def test_binary_kl_values():
    assert binary_kl(0.5, 0.5) == 0.0
    assert binary_kl(0.1, 0.9) == pytest.approx(1.757779, abs=1e-6)
    assert binary_kl(0.1, 0.9) == pytest.approx(binary_kl(0.9, 0.1), rel=1e-14)


@pytest.mark.parametrize("p,q", [(0.0, 0.5), (0.5, 1.0), (-0.1, 0.5), (0.5, 2.0)])
def test_binary_kl_rejects_out_of_range(p, q):
    with pytest.raises(ValueError):
        binary_kl(p, q)


def test_bernoulli_boundary_is_infinite():
    assert kl(0.3, 0.0, BER) == np.inf
    assert kl(0.3, 1.0, BER) == np.inf
    assert kl(0.0, 0.0, BER) == 0.0
    assert kl(0.0, 0.5, BER) == pytest.approx(np.log(2.0))


@pytest.mark.parametrize("m1,m2,sigma", [(0.0, 1.0, 1.0), (0.3, -1.2, 0.5), (2.0, 2.5, 3.0)])
def test_gaussian_kl_matches_quadrature(m1, m2, sigma):
    fam = RewardFamily.gaussian(sigma)
    assert kl(m1, m2, fam) == pytest.approx(gaussian_kl_quad(m1, m2, sigma), rel=1e-8, abs=1e-12)


@given(st.floats(1e-3, 1 - 1e-3), st.floats(1e-3, 1 - 1e-3))
def test_bernoulli_matches_direct(x, y):
    assert kl(x, y, BER) == pytest.approx(bernoulli_kl_direct(x, y), rel=1e-10, abs=1e-14)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 3))
def test_gaussian_symmetric_nonnegative(x, y, s):
    fam = RewardFamily.gaussian(s)
    assert kl(x, y, fam) == kl(y, x, fam) >= 0.0
    assert kl(x, x, fam) == 0.0


@pytest.mark.parametrize("family,x,lo,hi", [(G1, 0.3, -3.0, 3.0), (BER, 0.3, 1e-3, 1 - 1e-3),
                                            (BER, 0.95, 1e-3, 1 - 1e-3)])
def test_monotone_on_each_side(family, x, lo, hi):
    left = np.linspace(lo, x, 400)
    right = np.linspace(x, hi, 400)
    assert np.all(np.diff(kl(x, left, family)) < 0)
    assert np.all(np.diff(kl(x, right, family)) > 0)


def test_gaussian_interval_example():
    assert confidence_interval(0.0, 4, 2.0, G1) == (-1.0, 1.0)


@pytest.mark.parametrize("family,m", [(G1, 0.3), (BER, 0.3)])
def test_zero_radius_is_degenerate(family, m):
    assert confidence_interval(m, 7, 0.0, family) == (m, m)


def test_bernoulli_interval_example():
    a, b = confidence_interval(0.5, 10, 0.5, BER)
    assert a < 0.5 < b
    assert 10 * kl(0.5, a, BER) == pytest.approx(0.5, abs=1e-10)
    assert 10 * kl(0.5, b, BER) == pytest.approx(0.5, abs=1e-10)


@settings(max_examples=200)
@given(st.floats(0.01, 0.99), st.integers(1, 10_000), st.floats(0.0, 30.0))
def test_bernoulli_interval_inversion(m, n, r):
    lo, hi = BER.default_domain()
    a, b = confidence_interval(m, n, r, BER)
    assert lo <= a <= m <= b <= hi
    for e in (a, b):
        if lo < e < hi and r > 0:
            assert abs(n * kl(m, e, BER) - r) <= 1e-10 * max(1.0, r)
        else:
            assert n * kl(m, e, BER) <= r + 1e-10 * max(1.0, r)


def test_bernoulli_interval_clipped_to_domain():
    lo, hi = BER.default_domain()
    a, b = confidence_interval(0.5, 1, 50.0, BER)
    assert (a, b) == (lo, hi)


def test_interval_vectorised_and_warm_start_agree():
    m = np.array([0.2, 0.5, 0.8])
    n = np.array([5, 50, 500])
    warm = {}
    first = confidence_interval(m, n, 3.0, BER, warm=warm)
    again = confidence_interval(m + 1e-3, n, 3.1, BER, warm=warm)
    cold = confidence_interval(m + 1e-3, n, 3.1, BER)
    for x, y in zip(again, cold):
        assert np.allclose(x, y, atol=1e-12)
    for i in range(3):
        single = confidence_interval(m[i], n[i], 3.0, BER)
        assert first[0][i] == pytest.approx(single[0], abs=1e-13)
        assert first[1][i] == pytest.approx(single[1], abs=1e-13)


def test_interval_rejects_bad_arguments():
    with pytest.raises(ValueError):
        confidence_interval(0.5, 0, 1.0, G1)
    with pytest.raises(ValueError):
        confidence_interval(0.5, 3, -1.0, G1)


@settings(max_examples=200)
@given(st.floats(0.01, 0.99), st.floats(-30, 30))
def test_tilted_mean_is_stationary_point(mu, k):
    lam, dlam = tilted_mean(mu, k, BER)
    lam = float(lam)
    if 1e-9 < lam < 1 - 1e-9:
        assert lam - mu == pytest.approx(k * lam * (1 - lam), abs=1e-12)
        h = 1e-6
        fd = (float(tilted_mean(mu, k + h, BER)[0]) - float(tilted_mean(mu, k - h, BER)[0])) / (2 * h)
        assert float(dlam) == pytest.approx(fd, rel=1e-4, abs=1e-9)


def test_tilted_mean_gaussian():
    fam = RewardFamily.gaussian(2.0)
    lam, d = tilted_mean(np.array([0.0, 1.0]), np.array([1.0, -0.5]), fam)
    assert np.allclose(lam, [4.0, -1.0]) and np.allclose(d, 4.0)


def test_evaluator_wrapper():
    ev = KlEvaluator(G1)
    assert ev.kl(1.0, 0.0) == 0.5
    assert ev.interval(0.0, 4, 2.0) == (-1.0, 1.0)
