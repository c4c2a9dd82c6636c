"""Bounded-Lipschitz flat metric: LP route vs closed-form oracles."""

import numpy as np
import pytest

from atlasfbp.errors import UsageError
from atlasfbp.mass_profile import (
    Grid,
    PointMeasure,
    cdf_of_points,
    d_flat_r,
    d_star,
)

from _gen import default_grid, linear_profile, two_dirac_flat_oracle


def _points(*atoms, weight=1.0):
    return PointMeasure(atoms=np.array(sorted(atoms), dtype=float), weight=weight)


def test_d_flat_r_identical_inputs_zero():
    mu = _points(0.0, 0.3, 1.1)
    g = default_grid()
    assert d_flat_r(mu, mu, 2.0, grid=g) == pytest.approx(0.0, abs=1e-12)


def test_d_flat_r_two_diracs_matches_budget_split_oracle():
    g = default_grid()
    h = g.h
    mu = _points(0.0)
    nu = _points(h)
    want = two_dirac_flat_oracle(h)
    got = d_flat_r(mu, nu, 2.0, grid=g)
    assert got == pytest.approx(want, abs=1e-9)


def test_d_flat_r_wider_dirac_separation():
    # separation of k cells: oracle 2 kh / (2 + kh) while the budget allows
    g = default_grid()
    for k in (2, 5, 17):
        gap = k * g.h
        got = d_flat_r(_points(0.0), _points(gap), 2.5, grid=g)
        assert got == pytest.approx(two_dirac_flat_oracle(gap), abs=1e-9)


def test_d_flat_r_support_right_of_r_is_zero():
    g = default_grid()
    mu = _points(2.0, 2.5)
    nu = _points(2.2)
    assert d_flat_r(mu, nu, r=1.0, grid=g) == pytest.approx(0.0, abs=1e-12)


def test_d_flat_r_symmetry_exact():
    g = default_grid()
    rng = np.random.default_rng(3)
    for _ in range(5):
        mu = PointMeasure(np.sort(rng.uniform(-0.5, 2.5, 13)), weight=1 / 13)
        nu = PointMeasure(np.sort(rng.uniform(-0.5, 2.5, 9)), weight=1 / 9)
        a = d_flat_r(mu, nu, 2.0, grid=g)
        b = d_flat_r(nu, mu, 2.0, grid=g)
        assert a == b  # canonical sign makes this exact


def test_d_flat_r_triangle_inequality():
    g = default_grid()
    rng = np.random.default_rng(5)
    for _ in range(5):
        ms = [
            PointMeasure(np.sort(rng.uniform(-0.5, 2.5, rng.integers(5, 20))),
                         weight=1.0 / 11)
            for _ in range(3)
        ]
        d01 = d_flat_r(ms[0], ms[1], 2.0, grid=g)
        d12 = d_flat_r(ms[1], ms[2], 2.0, grid=g)
        d02 = d_flat_r(ms[0], ms[2], 2.0, grid=g)
        assert d02 <= d01 + d12 + 1e-9


def test_d_flat_r_single_atom_closed_form():
    # one atom of weight w at distance L from the support bound r:
    # sup f(atom) = max_s min(s, (1-s) L') with L' = L + h (pinned zero sits
    # one node beyond r), so the distance is w L' / (1 + L')
    g = default_grid()
    mu = _points(0.5, weight=0.25)
    nu = PointMeasure(np.array([]), weight=0.25)
    L = 1.5 + g.h
    assert d_flat_r(mu, nu, 2.0, grid=g) == pytest.approx(0.25 * L / (1 + L), abs=1e-9)


def test_d_flat_r_profile_vs_points():
    g = default_grid()
    lam = 2.0
    prof = linear_profile(lam, g)
    n = 4000
    rng = np.random.default_rng(11)
    atoms = np.cumsum(rng.exponential(1.0 / (lam * n), size=int(3.5 * lam * n)))
    atoms = atoms[atoms <= g.x_hi]
    mu = PointMeasure(atoms, weight=1.0 / n)
    d = d_flat_r(mu, prof, 2.0)
    assert 0.0 < d < 0.05


def test_d_flat_requires_grid_for_point_pairs():
    mu = _points(0.0)
    with pytest.raises(UsageError):
        d_flat_r(mu, mu, 1.0)


def test_d_star_identical_zero():
    g = default_grid()
    mu = _points(0.1, 0.9)
    res = d_star(mu, mu, r_max=3, grid=g)
    assert res.value == pytest.approx(0.0, abs=1e-12)
    assert res.truncation_bound == pytest.approx(2.0 ** -3)


def test_d_star_term_by_term():
    g = default_grid()
    gap = 26 * g.h  # node-aligned so atom binning is exact
    mu, nu = _points(0.0), _points(gap)
    res = d_star(mu, nu, r_max=3, grid=g)
    want = sum(
        2.0 ** (-r) * min(1.0, d_flat_r(mu, nu, float(r), grid=g))
        for r in (1, 2, 3)
    )
    assert res.value == pytest.approx(want, abs=1e-12)
    # each term equals the two-Dirac oracle value (plenty of descent room)
    assert res.value == pytest.approx(
        sum(2.0 ** (-r) for r in (1, 2, 3)) * two_dirac_flat_oracle(gap), abs=1e-9)


def test_d_star_truncation_bound_for_far_right_difference():
    g = Grid.from_bounds(-1.0, 6.0, 1.0 / 64.0)
    mu = _points(0.5, 5.5)
    nu = _points(0.5, 5.9)
    res = d_star(mu, nu, r_max=5, grid=g)
    assert res.value <= 2.0 ** -5 + 1e-9  # they differ only right of r_max
