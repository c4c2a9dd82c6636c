"""Initial-condition generators and the exponential tail-bound gate."""

import numpy as np
import pytest
from scipy import stats

from atlasfbp.errors import UsageError
from atlasfbp.initial_conditions import (
    InitialDescriptor,
    chernoff_constants,
    check_tail_bound,
    sample_deterministic,
    sample_ppp,
    truncation_error_bound,
    wilson_bounds,
)
from atlasfbp.mass_profile import Grid, PointMeasure, cdf_of_points, d_star


# ----------------------------------------------------------------- descriptor

def test_descriptor_models_evaluate():
    d = InitialDescriptor.linear(2.0)
    assert d.v0(1.5) == 3.0
    assert d.v0(-1.0) == 0.0
    assert d.v0_inverse(3.0) == 1.5
    p = InitialDescriptor.power(1.0, 2.0)
    assert p.v0(2.0) == 4.0
    assert p.v0_inverse(4.0) == 2.0
    t = InitialDescriptor.table([0.0, 1.0, 2.0], [0.0, 1.5, 4.0])
    assert t.v0(0.5) == 0.75
    assert t.v0(3.0) == pytest.approx(6.5)  # linear continuation
    assert t.v0_inverse(1.5) == 1.0


def test_descriptor_floor_validation():
    InitialDescriptor.linear(2.0, lambda0_floor=2.0)
    with pytest.raises(UsageError):
        InitialDescriptor("linear", {"lam": 1.0}, lambda0_floor=1.5)
    with pytest.raises(UsageError):
        InitialDescriptor.power(1.0, 2.0).__class__(
            "power", {"c": 1.0, "p": 2.0}, lambda0_floor=0.5)  # x^2 < 0.5x near 0


def test_descriptor_to_profile_junction():
    g = Grid.from_bounds(-1.0, 3.0, 1e-3)
    for d in (InitialDescriptor.linear(2.0), InitialDescriptor.power(0.5, 2.0)):
        prof = d.to_profile(g)
        assert prof.is_nondecreasing()
        assert prof.values[0] == 0.0


# ----------------------------------------------------------------- ppp

def test_ppp_count_mean_in_unit_interval():
    lam, n, seeds = 2.0, 400, 200
    d = InitialDescriptor.linear(lam)
    counts = []
    for s in range(seeds):
        x = sample_ppp(d, n, seed=s, x_cov=3.0)
        counts.append(np.sum((x >= 0) & (x <= 1.0)))
    mean = float(np.mean(counts))
    want = lam * n
    assert abs(mean - want) <= 3.0 * np.sqrt(lam * n) / np.sqrt(seeds) * 3
    # variance ~ mean for Poisson
    assert np.var(counts) == pytest.approx(want, rel=0.35)


def test_ppp_single_draw_matches_substream():
    d = InitialDescriptor.linear(1.0)
    x = sample_ppp(d, 1, seed=123, x_cov=50.0)
    rng = np.random.default_rng(np.random.Philox(key=np.uint64(123)))
    g1 = rng.exponential(1.0)
    assert x[0] == pytest.approx(d.v0_inverse(g1), abs=1e-12)


def test_ppp_power_model_counts():
    c, p, n = 1.0, 2.0, 300
    d = InitialDescriptor.power(c, p)
    for b in (0.5, 1.0):
        counts = [
            np.sum(sample_ppp(d, n, seed=s, x_cov=2.5) <= b) for s in range(150)
        ]
        want = n * c * b**p
        assert np.mean(counts) == pytest.approx(want, abs=4 * np.sqrt(want / 150) + 0.5)


def test_ppp_counts_have_independent_increments():
    # chi-square independence of counts in [0,1) vs [1,2) across seeds
    d = InitialDescriptor.linear(2.0)
    n = 200
    a, b = [], []
    for s in range(300):
        x = sample_ppp(d, n, seed=s, x_cov=4.0)
        a.append(np.sum(x < 1.0))
        b.append(np.sum((x >= 1.0) & (x < 2.0)))
    a, b = np.array(a), np.array(b)
    table = np.array([
        [np.sum((a <= np.median(a)) & (b <= np.median(b))),
         np.sum((a <= np.median(a)) & (b > np.median(b)))],
        [np.sum((a > np.median(a)) & (b <= np.median(b))),
         np.sum((a > np.median(a)) & (b > np.median(b)))],
    ])
    res = stats.chi2_contingency(table)
    assert res.pvalue > 0.05


def test_ppp_cdf_converges_to_v0():
    d = InitialDescriptor.linear(2.0)
    g = Grid.from_bounds(-1.0, 4.0, 1.0 / 128.0)
    prof = d.to_profile(g)
    medians = []
    for n in (50, 200, 800):
        vals = []
        for s in range(9):
            x = sample_ppp(d, n, seed=s, x_cov=4.0)
            mu = PointMeasure(x, weight=1.0 / n)
            vals.append(d_star(mu, prof, r_max=3, grid=g).value)
        medians.append(np.median(vals))
    assert medians[0] > medians[1] > medians[2]


# ----------------------------------------------------------------- lattice

def test_deterministic_identity_lattice():
    x = sample_deterministic(lambda u: u, n=10, count=5)
    np.testing.assert_allclose(x, [0.0, 0.1, 0.2, 0.3, 0.4])


def test_deterministic_quantile_count_error():
    # |count[0, j]/n - f^{-1}(j)| <= 1/n for integer thresholds
    f = lambda u: np.sqrt(u)  # v0(x) = x^2
    n, count = 37, 37 * 9
    x = sample_deterministic(f, n=n, count=count)
    for j in (1.0, 2.0):
        emp = np.sum(x <= j) / n
        assert abs(emp - j**2) <= 1.0 / n + 1e-12


def test_deterministic_rejects_bad_f():
    with pytest.raises(UsageError):
        sample_deterministic(lambda u: 1.0 + u, n=5, count=3)  # f(0) != 0
    with pytest.raises(UsageError):
        sample_deterministic(lambda u: -u, n=5, count=3)


# ----------------------------------------------------------------- tail bound

def test_wilson_bounds_basic():
    lo, hi = wilson_bounds(5, 100)
    assert 0.0 < lo < 0.05 < hi < 0.12
    lo0, hi0 = wilson_bounds(0, 100)
    assert lo0 <= 1e-12 and hi0 < 0.05


def test_tail_bound_ppp_passes_with_chernoff_constants():
    d = InitialDescriptor.linear(2.0)
    m, C, c = chernoff_constants(d)
    rep = check_tail_bound(
        lambda n, seed: sample_ppp(d, n, seed=seed, x_cov=6.0),
        n_list=(50, 200),
        m=m, C=C, c=c, trials=120, j_max=4, seed=0,
    )
    assert rep.passed, rep.failures[:3]


def test_tail_bound_deterministic_passes_trivially():
    rep = check_tail_bound(
        lambda n, seed: sample_deterministic(lambda u: u, n=n, count=4 * n),
        n_list=(64,),
        m=1.0, C=np.e, c=1.0, trials=100, j_max=3, seed=0,
    )
    assert rep.passed


def test_tail_bound_detects_heavy_clumps():
    d = InitialDescriptor.linear(2.0)
    m, C, c = chernoff_constants(d)

    def clumpy(n, seed):
        rng = np.random.default_rng(seed)
        x = sample_ppp(d, n, seed=seed, x_cov=6.0)
        if rng.uniform() < 0.5:  # dump a heavy clump into [0, 1]
            x = np.sort(np.concatenate([x, rng.uniform(0, 1, size=25 * n)]))
        return x

    rep = check_tail_bound(
        clumpy, n_list=(100,), m=m, C=C, c=c, trials=120, j_max=2, seed=0)
    assert not rep.passed
    assert rep.worst_excess > 0.2


def test_truncation_error_bound_decays():
    d = InitialDescriptor.linear(2.0)
    b1 = truncation_error_bound(d, n=1000, x_cov=4.0, reach=1.0, T=0.25)
    b2 = truncation_error_bound(d, n=1000, x_cov=6.0, reach=1.0, T=0.25)
    assert b2 < b1 < 1e-4
    assert b2 < 1e-10
