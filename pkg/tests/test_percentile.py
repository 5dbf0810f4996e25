import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.stats import norm

from uinject.percentile import empirical_percentile, percentile_convergence_probe, percentile_gradient

samples_st = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=60)
gamma_st = st.floats(0.5, 99.5)


def test_integer_rank_takes_that_order_statistic(rng):
    s = rng.permutation(np.arange(1000.0))
    sel = empirical_percentile(s, 5)
    assert sel.value == 49.0  # 50th lowest
    assert sel.interp_weight == 0.0
    assert s[sel.rank_low] == 49.0


def test_single_sample():
    for g in (1, 5, 50, 99):
        assert empirical_percentile([7.0], g).value == 7.0


def test_fractional_rank_interpolates():
    s = np.arange(10.0, 0.0, -1.0)  # 10, 9, ..., 1
    sel = empirical_percentile(s, 25)  # t = 2.5
    assert sel.value == 2.5
    assert sel.interp_weight == 0.5
    assert (s[sel.rank_low], s[sel.rank_high]) == (2.0, 3.0)


def test_rank_below_one_returns_minimum():
    assert empirical_percentile([3.0, 1.0, 2.0], 10).value == 1.0


def test_errors():
    with pytest.raises(ValueError):
        empirical_percentile([], 5)
    with pytest.raises(ValueError):
        empirical_percentile([1.0, np.nan], 5)
    with pytest.raises(ValueError):
        empirical_percentile([1.0], 0)
    with pytest.raises(ValueError):
        empirical_percentile([1.0], 100)


def test_batched_matches_rowwise(rng):
    s = rng.normal(size=(7, 33))
    sel = empirical_percentile(s, 12.5)
    for i in range(7):
        row = empirical_percentile(s[i], 12.5)
        assert sel.value[i] == row.value
        assert sel.rank_low[i] == row.rank_low


def test_gradient_without_interpolation_is_one_hot(rng):
    s = rng.normal(size=200)
    sel = empirical_percentile(s, 5)
    w = percentile_gradient(sel, 200)
    assert w[sel.rank_low] == 1.0
    assert np.count_nonzero(w) == 1


def test_gradient_with_half_interpolation():
    s = np.arange(1.0, 11.0)
    w = percentile_gradient(empirical_percentile(s, 25), 10)
    assert w[1] == 0.5 and w[2] == 0.5 and w.sum() == 1.0


@given(samples_st, gamma_st)
def test_gradient_weights_sum_to_one(s, g):
    w = percentile_gradient(empirical_percentile(s, g), len(s))
    assert np.isclose(w.sum(), 1.0) and np.all(w >= 0)


@given(samples_st, gamma_st)
def test_gradient_matches_finite_difference(s, g):
    s = np.asarray(s)
    assume(len(np.unique(s)) == len(s))
    sel = empirical_percentile(s, g)
    w = percentile_gradient(sel, len(s))
    gaps = np.diff(np.sort(s))
    assume(len(s) == 1 or gaps.min() > 1e-6 * (1 + np.abs(s).max()))
    h = 1e-3 * gaps.min() if len(s) > 1 else 1.0
    for i in np.flatnonzero(w) if len(s) > 1 else [0]:
        up, dn = s.copy(), s.copy()
        up[i] += h
        dn[i] -= h
        fd = (empirical_percentile(up, g).value - empirical_percentile(dn, g).value) / (2 * h)
        assert np.isclose(fd, w[i], rtol=1e-6, atol=1e-6)


@given(samples_st, gamma_st, st.integers(0, 59), st.floats(0, 1e3))
def test_monotone_in_each_sample(s, g, i, bump):
    s = np.asarray(s)
    i %= len(s)
    t = s.copy()
    t[i] += bump
    assert empirical_percentile(t, g).value >= empirical_percentile(s, g).value


@given(samples_st, gamma_st, st.floats(1e-3, 1e3), st.floats(-1e3, 1e3))
def test_scale_shift_equivariance(s, g, a, b):
    s = np.asarray(s)
    lhs = empirical_percentile(a * s + b, g).value
    rhs = a * empirical_percentile(s, g).value + b
    assert np.isclose(lhs, rhs, rtol=1e-9, atol=1e-6 * (1 + abs(a) * np.abs(s).max()))


@settings(max_examples=50)
@given(st.integers(0, 2**31), st.integers(2, 200), gamma_st, st.data())
def test_nonselected_samples_locally_irrelevant(seed, L, g, data):
    s = np.random.default_rng(seed).normal(size=L)
    sel = empirical_percentile(s, g)
    others = np.setdiff1d(np.arange(L), [sel.rank_low, sel.rank_high])
    assume(len(others) > 0)
    i = data.draw(st.sampled_from(list(others)))
    srt = np.sort(s)
    eps = 0.25 * np.diff(srt).min()
    t = s.copy()
    t[i] += data.draw(st.sampled_from([-eps, eps]))
    assert empirical_percentile(t, g).value == sel.value


def test_normal_5th_percentile_bias():
    est = percentile_convergence_probe(lambda r, n: r.standard_normal(n), 5, 100_000, 50,
                                       true_value=0.0, rng=0)
    assert abs(est - (-1.6449)) < 0.02


def test_uniform_median():
    est = percentile_convergence_probe(lambda r, n: r.uniform(size=n), 50, 20_000, 20, 0.0, rng=1)
    assert abs(est - 0.5) < 0.01


def test_point_mass_has_zero_bias():
    assert percentile_convergence_probe(lambda r, n: np.full(n, 3.25), 5, 1000, 5, 3.25, rng=0) == 0.0


def test_bias_shrinks_with_sample_size():
    # trials sized so Monte Carlo noise sits well below the bias at each L
    q = norm.ppf(0.05)
    bias = [abs(percentile_convergence_probe(lambda r, n: r.standard_normal(n), 5, L, T, q, rng=7))
            for L, T in ((100, 10_000), (1000, 10_000), (100_000, 200))]
    assert bias[0] > bias[1] > bias[2]
