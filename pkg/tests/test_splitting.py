"""Envelope schemes: steps, runs, boundary extraction, certificates."""

import warnings

import numpy as np
import pytest

from atlasfbp.errors import GridOverflowError, MassOverflowError, UsageError
from atlasfbp.mass_profile import (
    Grid,
    MassProfile,
    TailModel,
    gamma_quantile,
    integral_left,
    precede_mod,
)
from atlasfbp.heat_semigroup import smooth
from atlasfbp.splitting import (
    SplitConfig,
    boundary_from_profile,
    default_grid,
    error_certificate,
    run,
    step_lower,
    step_upper,
)
from atlasfbp.verify import SelfSimilarReference, boundary_slope

from _gen import linear_profile


def _cfg(grid, delta=1e-3, Delta=0.1, T=0.25, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return SplitConfig(delta=delta, Delta=Delta, T=T, grid=grid, **kw)


def _v0(lam, grid):
    x = grid.nodes()
    return MassProfile(grid, lam * np.maximum(x, 0.0), TailModel.linear(0.0, lam))


GRID = default_grid(lambda u: u / 1.0, 0.25, 1e-3)


# ----------------------------------------------------------------- steps

def test_step_upper_stationary_cut_location():
    # one step from 2x+: the cut sits at kappa_1 sqrt(delta) with
    # kappa_1 solving (1+g^2) Phi(g) + g phi(g) = 1  (integral of the
    # smoothed ramp), about 0.4708
    from scipy.stats import norm

    delta = 1e-3
    v = _v0(2.0, GRID)
    out, gamma = step_upper(v, delta)
    g = gamma / np.sqrt(delta)
    lhs = (1 + g * g) * norm.cdf(g) + g * norm.pdf(g)
    assert lhs == pytest.approx(1.0, abs=2e-3)
    assert gamma / np.sqrt(delta) == pytest.approx(0.4708, abs=0.02)
    assert integral_left(out, GRID.x_hi) == pytest.approx(
        integral_left(smooth(v, delta), GRID.x_hi) - delta, abs=1e-9)


def test_step_upper_insufficient_mass_overflows():
    g = Grid.from_bounds(-1.0, 1.0, 1e-2)
    x = g.nodes()
    vals = 1e-4 * np.maximum(x, 0.0)
    v = MassProfile(g, vals, TailModel.linear(0.0, 1e-4))
    with pytest.raises(MassOverflowError):
        step_upper(v, 1.0)  # grid holds far less than delta=1 of integral


def test_step_upper_matches_refined_reference():
    # gamma from a 10x refined grid agrees within the coarse h
    delta = 1e-3
    coarse = Grid.from_bounds(-1.0, 2.0, 1e-3)
    fine = Grid.from_bounds(-1.0, 2.0, 1e-4)
    _, g1 = step_upper(_v0(1.0, coarse), delta)
    _, g2 = step_upper(_v0(1.0, fine), delta)
    assert abs(g1 - g2) <= coarse.h


def test_step_lower_band_and_ladder():
    delta, Delta, t0 = 1e-3, 0.05, 2e-3
    v = _v0(2.0, GRID)
    out, inc = step_lower(v, Delta, delta, t_prev=0.0, t0=t0)
    assert inc == delta  # first branch of the ladder
    out2, inc2 = step_lower(v, 0.1, delta, t_prev=0.01, t0=t0)
    assert inc2 == pytest.approx(delta * np.exp(-0.1**5 / delta))
    # band sits near the Delta-quantile of the smoothed profile: smoothing
    # the ramp adds ~delta of left-tail integral, so the quantile solves
    # a^2 + delta = Delta
    sm = smooth(v, delta)
    gq = gamma_quantile(sm, Delta)
    assert gq == pytest.approx(np.sqrt(Delta - delta), abs=5e-4)
    # removed integral is exactly delta
    assert integral_left(out, GRID.x_hi) == pytest.approx(
        integral_left(sm, GRID.x_hi) - delta, abs=1e-9)


def test_ladder_total_bound():
    cfg = _cfg(GRID)
    t_prev = np.arange(cfg.n_steps) * cfg.delta
    total = sum(cfg.ladder_increment(t) for t in t_prev)
    assert total <= cfg.ladder_bound() + 1e-12


# ----------------------------------------------------------------- runs

@pytest.fixture(scope="module")
def run_lam2():
    v0 = _v0(2.0, GRID)
    return run(v0, _cfg(GRID, snapshot_times=(0.05, 0.125, 0.25)))


@pytest.fixture(scope="module")
def run_lam1():
    v0 = _v0(1.0, GRID)
    return run(v0, _cfg(GRID, snapshot_times=(0.05, 0.125, 0.25)))


@pytest.fixture(scope="module")
def run_lam4():
    v0 = _v0(4.0, GRID)
    return run(v0, _cfg(GRID, snapshot_times=(0.25,)))


def test_run_stationary_boundary_near_zero(run_lam2):
    # the stationary case keeps the cut path within 2 sqrt(delta) + 3h
    tol = 2 * np.sqrt(1e-3) + 3e-3
    assert float(np.max(np.abs(run_lam2.sigma_hat.values))) <= tol


def test_run_direction_dichotomy(run_lam1, run_lam4):
    assert run_lam1.sigma_hat.values[-1] > 0  # supercooled: boundary right
    assert run_lam4.sigma_hat.values[-1] < 0  # melting: boundary left


def test_run_selfsimilar_boundary_vs_oracle(run_lam1):
    ref = SelfSimilarReference.for_lambda(1.0)
    want = ref.a * np.sqrt(0.25)
    tol = 3e-3 + 2 * np.sqrt(1e-3)
    assert abs(run_lam1.sigma_hat.values[-1] - want) <= tol


def test_run_envelopes_bracket_each_other(run_lam1):
    # the raw lower-vs-upper cumulative gap never exceeds Delta (plus
    # quadrature); this is the discrete bracket theorem
    g = GRID
    j = g.index_left(2.0)
    raw = float(np.max(run_lam1.raw_gap_sup_nodes[: j + 1]))
    sup_v = run_lam1.final_upper.sup
    assert raw <= 0.1 + 3 * g.h * sup_v


def test_run_sandwiches_reference(run_lam1):
    # true solution ⪯ upper envelope, and lower ⪯ true mod ladder
    ref = SelfSimilarReference.for_lambda(1.0)
    cfg = run_lam1.config
    for t, up in run_lam1.upper.items():
        if t == 0.0:
            continue
        vref = ref.profile(GRID, t)
        assert precede_mod(vref, up, 0.0).holds
        lo = run_lam1.lower[t]
        ell = run_lam1.ladder[int(round(t / cfg.delta))]
        assert precede_mod(lo, vref, ell).holds


def test_run_cut_depth_never_exceeds_4delta_quantile(run_lam2):
    # recorded cut locations stay below the 4delta-quantile of the previous
    # profile; spot-check by re-running two steps from a snapshot
    cfg = run_lam2.config
    prof = run_lam2.upper[0.125]
    sm = smooth(prof, cfg.delta)
    _, gamma = step_upper(prof, cfg.delta)
    zeta = gamma_quantile(prof, 4 * cfg.delta)
    assert gamma <= zeta + GRID.h


def test_run_density_floor(run_lam1):
    # v0 >= 1 * x+ keeps profile increments >= floor * length right of the cut
    pair = run_lam1
    for t, up in pair.upper.items():
        if t == 0.0:
            continue
        sh = pair.sigma_hat(t)
        x = GRID.nodes()
        sel = (x >= sh + 0.05) & (x <= 2.0)
        vals = up.values[sel]
        xs = x[sel]
        k = 40  # increments over intervals of 40 h
        incr = vals[k:] - vals[:-k]
        assert np.all(incr >= 1.0 * (xs[k:] - xs[:-k]) - 0.01)


def test_run_boundary_continuity_under_refinement():
    # max step jump of the cut path shrinks with delta
    g = Grid.from_bounds(-2.5, 2.5, 1e-3)
    v0 = _v0(2.0, g)
    jumps = []
    for delta in (4e-3, 2e-3, 1e-3):
        pair = run(v0, _cfg(g, delta=delta, T=0.06))
        jumps.append(pair.sigma_hat.max_step_jump())
    assert jumps[2] < jumps[0]


def test_run_grid_overflow_aborts():
    g = Grid.from_bounds(-0.05, 0.6, 1e-3)  # far too narrow on the left
    x = g.nodes()
    v0 = MassProfile(g, 1.0 * np.maximum(x, 0.0), TailModel.linear(0.0, 1.0))
    with pytest.raises(GridOverflowError):
        run(v0, _cfg(g, T=0.25))


def test_run_rejects_wrong_grid_or_shape():
    other = Grid.from_bounds(-1.0, 1.0, 1e-3)
    with pytest.raises(UsageError):
        run(_v0(1.0, other), _cfg(GRID))


# ----------------------------------------------------------------- extraction

def test_boundary_from_profile_shifted_ramp():
    g = Grid.from_bounds(-1.0, 2.0, 1e-3)
    x = g.nodes()
    vals = 2.0 * np.maximum(x - 0.3, 0.0)
    v = MassProfile(g, vals, TailModel.linear(-0.6, 2.0))
    b = boundary_from_profile(v)
    assert b == pytest.approx(0.3, abs=g.h)


def test_boundary_from_profile_zero_sentinel():
    g = Grid.from_bounds(-1.0, 2.0, 1e-2)
    v = MassProfile(g, np.zeros(g.count), TailModel.zero())
    assert boundary_from_profile(v) is None


def test_boundary_from_profile_matches_cut_record(run_lam1):
    pair = run_lam1
    b = boundary_from_profile(pair.final_upper)
    assert abs(b - pair.sigma_hat.values[-1]) <= 2 * GRID.h


# ----------------------------------------------------------------- certificate

def test_certificate_formula_and_bound(run_lam1):
    cert = error_certificate(run_lam1, r=2.0)
    cfg = run_lam1.config
    want = 0.1 + cfg.t0 + cfg.delta + 0.25 * np.exp(-0.1**5 / cfg.delta)
    assert cert.analytic_bound == pytest.approx(want, rel=1e-12)
    assert cert.ok, (cert.measured_gap, cert.analytic_bound)


def test_certificate_gap_vanishes_left_of_support(run_lam1):
    cert = error_certificate(run_lam1, r=-4.2)
    assert cert.measured_gap <= 1e-12


def test_certificate_nonincreasing_under_delta_halving():
    g = Grid.from_bounds(-2.5, 2.5, 1e-3)
    v0 = _v0(2.0, g)
    gaps = []
    for delta in (4e-3, 2e-3, 1e-3):
        pair = run(v0, _cfg(g, delta=delta, T=0.06))
        gaps.append(error_certificate(pair, 2.0).measured_gap)
    assert gaps[0] >= gaps[1] >= gaps[2]


def test_envelope_slope_matches_oracle_local_slope(run_lam1):
    # the envelope profile's least-squares slope just past the cut layer
    # equals the oracle's local slope G'(xi) at the same offsets (the
    # contact slope 2 itself lives below the layer resolution)
    ref = SelfSimilarReference.for_lambda(1.0)
    cfg = run_lam1.config
    t = 0.25
    up = run_lam1.upper[t]
    sh = run_lam1.sigma_hat(t)
    lo_off, hi_off = 2 * np.sqrt(cfg.delta), 5 * np.sqrt(cfg.delta)
    got = boundary_slope(up, sh, lo_off, hi_off)
    mid_xi = (sh + 0.5 * (lo_off + hi_off)) / np.sqrt(t)
    want = float(ref.slope(mid_xi))
    assert got == pytest.approx(want, abs=0.06)
