"""Cumulative mass functions on a grid, mass-quantile cut operators, the
antiderivative partial order, and the truncated bounded-Lipschitz metric.

A :class:`MassProfile` stores a nonnegative function ``v`` sampled on a
uniform grid, interpreted as piecewise linear between nodes, together with an
analytic :class:`TailModel` for ``x >= x_hi``.  ``v`` represents a cumulative
mass function ``v(x) = mu(-inf, x]``; all profiles are assumed to vanish left
of a support point inside the grid (compact left support), which makes every
left integral ``integral_left(v, r) = int_{-inf}^r v(x) dx`` finite and
computable by the trapezoid rule.

Solution-class profiles are nondecreasing; the cut operators also accept and
produce non-monotone profiles, which the envelope schemes require.

All functions here are pure: inputs are never mutated, node arrays are frozen
at construction, and values are safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix

from .errors import DomainError, MassOverflowError, UsageError

__all__ = [
    "Grid",
    "TailModel",
    "MassProfile",
    "PointMeasure",
    "OrderCertificate",
    "DStarResult",
    "integral_left",
    "node_cumulative",
    "gamma_quantile",
    "cut",
    "cut_band",
    "precede_mod",
    "default_order_tolerance",
    "cdf_of_points",
    "node_masses",
    "d_flat_r",
    "d_star",
    "profile_to_csv",
    "profile_from_csv",
    "points_to_csv",
    "points_from_csv",
]


# ----------------------------------------------------------------------
# grid and tail models
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform space grid with ``count`` nodes spaced ``h`` apart.

    ``x_hi`` is derived as ``x_lo + (count - 1) * h`` so the node set is
    closed under index arithmetic.
    """

    x_lo: float
    h: float
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise UsageError(f"grid needs at least 2 nodes, got {self.count}")
        if not (self.h > 0.0) or not np.isfinite(self.h):
            raise UsageError(f"grid spacing must be positive, got {self.h}")

    @property
    def x_hi(self) -> float:
        return self.x_lo + (self.count - 1) * self.h

    @classmethod
    def from_bounds(cls, x_lo: float, x_hi: float, h: float) -> "Grid":
        """Grid covering [x_lo, x_hi]; x_hi is rounded up to the node lattice."""
        count = int(np.ceil((x_hi - x_lo) / h - 1e-12)) + 1
        return cls(x_lo=float(x_lo), h=float(h), count=max(count, 2))

    def nodes(self) -> np.ndarray:
        x = self.x_lo + self.h * np.arange(self.count)
        x.setflags(write=False)
        return x

    def index_left(self, r: float) -> int:
        """Largest node index j with x_j <= r (clipped to the grid)."""
        j = int(np.floor((r - self.x_lo) / self.h + 1e-12))
        return min(max(j, 0), self.count - 1)


@dataclass(frozen=True)
class TailModel:
    """Analytic model of the profile on [x_hi, infinity).

    kind "linear": c0 + c1*x with c1 >= 0; kind "power": c * x**p with
    c, p >= 0; kind "zero": identically zero (for profiles whose support ends
    inside the grid).  Every kind satisfies a polynomial growth bound and is
    nonnegative and nondecreasing on the grid's right tail.
    """

    kind: str
    coefficients: tuple = ()

    def __post_init__(self):
        if self.kind not in ("linear", "power", "zero"):
            raise UsageError(f"unknown tail kind {self.kind!r}")
        if self.kind == "linear":
            c0, c1 = self.coefficients
            if c1 < 0:
                raise UsageError("linear tail must be nondecreasing (c1 >= 0)")
        elif self.kind == "power":
            c, p = self.coefficients
            if c < 0 or p < 0:
                raise UsageError("power tail needs c >= 0 and p >= 0")

    @classmethod
    def linear(cls, c0: float, c1: float) -> "TailModel":
        return cls("linear", (float(c0), float(c1)))

    @classmethod
    def power(cls, c: float, p: float) -> "TailModel":
        return cls("power", (float(c), float(p)))

    @classmethod
    def zero(cls) -> "TailModel":
        return cls("zero")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            c0, c1 = self.coefficients
            return c0 + c1 * x
        if self.kind == "power":
            c, p = self.coefficients
            return c * np.power(np.maximum(x, 0.0), p)
        return np.zeros_like(x)

    def integral(self, a: float, b: float) -> float:
        """Exact integral of the tail model over [a, b]."""
        if b <= a:
            return 0.0
        if self.kind == "linear":
            c0, c1 = self.coefficients
            return c0 * (b - a) + 0.5 * c1 * (b * b - a * a)
        if self.kind == "power":
            c, p = self.coefficients
            return c / (p + 1.0) * (b ** (p + 1.0) - a ** (p + 1.0))
        return 0.0


# ----------------------------------------------------------------------
# profiles and point measures
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class MassProfile:
    """Grid-sampled cumulative mass function with an analytic right tail.

    values[j] = v(x_j); between nodes v is the linear interpolant, beyond
    x_hi it is the tail model.  ``validate=False`` skips the nonnegativity
    and junction checks (used for diagnostic profiles, e.g. Duhamel output
    under a wrong boundary, which may go negative).
    """

    grid: Grid
    values: np.ndarray
    tail: TailModel
    junction_tol: float = 0.0
    validate: bool = True

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.grid.count,):
            raise UsageError(
                f"values shape {vals.shape} does not match grid count {self.grid.count}"
            )
        if self.validate:
            if not np.all(np.isfinite(vals)):
                raise UsageError("profile values must be finite")
            if np.any(vals < 0.0):
                raise UsageError(
                    f"profile values must be nonnegative (min {vals.min():.3e})"
                )
            tol = self.junction_tol or max(1e-9, 1e-9 * abs(float(vals[-1])))
            gap = abs(float(vals[-1]) - float(self.tail(self.grid.x_hi)))
            if gap > tol:
                raise UsageError(
                    f"tail junction mismatch at x_hi: |{vals[-1]:.6g} - "
                    f"{float(self.tail(self.grid.x_hi)):.6g}| = {gap:.3e} > {tol:.3e}"
                )

    def __call__(self, x):
        """Evaluate the profile (linear interpolation on the grid, tail beyond)."""
        x = np.asarray(x, dtype=float)
        inside = np.interp(x, self.grid.nodes(), self.values)
        if self.tail.kind == "zero":
            return np.where(x > self.grid.x_hi, 0.0, np.where(x < self.grid.x_lo, 0.0, inside))
        return np.where(
            x > self.grid.x_hi,
            self.tail(x),
            np.where(x < self.grid.x_lo, 0.0, inside),
        )

    @property
    def sup(self) -> float:
        return float(self.values.max(initial=0.0))

    def with_values(self, values: np.ndarray, **kw) -> "MassProfile":
        return replace(self, values=values, **kw)

    def is_nondecreasing(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.diff(self.values) >= -tol))


@dataclass(frozen=True)
class PointMeasure:
    """Finite atomic measure with equal per-atom weight (e.g. 1/n)."""

    atoms: np.ndarray
    weight: float

    def __post_init__(self):
        atoms = np.ascontiguousarray(self.atoms, dtype=float)
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        if atoms.ndim != 1:
            raise UsageError("atoms must be a 1-D array")
        if atoms.size > 1 and np.any(np.diff(atoms) < 0):
            raise UsageError("atoms must be sorted nondecreasing")
        if not (self.weight > 0.0):
            raise UsageError("atom weight must be positive")

    def cdf(self, x) -> np.ndarray:
        """Right-continuous CDF  F(x) = weight * #{atoms <= x}."""
        x = np.asarray(x, dtype=float)
        return self.weight * np.searchsorted(self.atoms, x, side="right").astype(float)

    @property
    def total_mass(self) -> float:
        return self.weight * self.atoms.size


class OrderCertificate(NamedTuple):
    """Result of a `precede_mod` check: worst gap of the bracket inequality."""

    holds: bool
    worst_r: float
    worst_gap: float
    tol: float


class DStarResult(NamedTuple):
    """Truncated metric value together with its truncation-error bound."""

    value: float
    truncation_bound: float


# ----------------------------------------------------------------------
# integrals and quantiles
# ----------------------------------------------------------------------

def node_cumulative(v: MassProfile) -> np.ndarray:
    """Trapezoid cumulative integral C[j] = int_{-inf}^{x_j} v dx.

    Mass left of the grid is zero by the compact-left-support convention.
    """
    vals = v.values
    h = v.grid.h
    out = np.empty(v.grid.count)
    out[0] = 0.0
    np.cumsum(0.5 * h * (vals[1:] + vals[:-1]), out=out[1:])
    return out


def integral_left(v: MassProfile, r: float, _cum: np.ndarray | None = None) -> float:
    """int_{-inf}^{r} v(x) dx, exact for the piecewise-linear interpolant.

    For r > x_hi the analytic tail integral is added.  Nonnegative and
    nondecreasing in r.
    """
    if not np.isfinite(r):
        raise DomainError(f"integration endpoint must be finite, got {r}")
    g = v.grid
    if r <= g.x_lo:
        return 0.0
    cum = node_cumulative(v) if _cum is None else _cum
    if r >= g.x_hi:
        return float(cum[-1]) + v.tail.integral(g.x_hi, r)
    j = g.index_left(r)
    if j >= g.count - 1:
        return float(cum[-1])
    u = r - (g.x_lo + j * g.h)
    if u <= 0.0:
        return float(cum[j])
    a = v.values[j]
    s = (v.values[j + 1] - a) / g.h
    return float(cum[j] + a * u + 0.5 * s * u * u)


def _quantile_cell(cum: np.ndarray, delta: float) -> int:
    """Index j of the cell [x_{j-1}, x_j] holding the leftmost delta-quantile."""
    j = int(np.searchsorted(cum, delta, side="left"))
    return max(j, 1)


def gamma_quantile(v: MassProfile, delta: float, _cum: np.ndarray | None = None) -> float:
    """Leftmost point gamma with  int_{-inf}^{gamma} v dx = delta.

    The sub-cell position solves the quadratic for the linear-in-cell
    density, so `integral_left(v, gamma) == delta` to roundoff.  Raises
    :class:`MassOverflowError` when delta exceeds the integral available on
    the grid (the caller must widen the window).
    """
    if delta < 0.0:
        raise DomainError(f"delta must be >= 0, got {delta}")
    g = v.grid
    cum = node_cumulative(v) if _cum is None else _cum
    total = float(cum[-1])
    if delta > total:
        raise MassOverflowError(
            f"quantile depth {delta:.6g} exceeds grid integral {total:.6g}; widen the window"
        )
    if delta == 0.0:
        # limiting quantile: the left edge of the support
        pos = np.nonzero(cum > 0.0)[0]
        if pos.size == 0:
            return g.x_lo
        return float(g.x_lo + (pos[0] - 1) * g.h)
    j = _quantile_cell(cum, delta)
    a = float(v.values[j - 1])
    b = float(v.values[j])
    d = delta - float(cum[j - 1])
    h = g.h
    if d <= 0.0:
        u = 0.0
    else:
        s = (b - a) / h
        denom = a + np.sqrt(max(a * a + 2.0 * s * d, 0.0))
        u = 2.0 * d / denom if denom > 0.0 else h
    u = min(max(u, 0.0), h)
    return float(g.x_lo + (j - 1) * g.h + u)


def _node_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.count, grid.h)
    w[0] = 0.5 * grid.h
    w[-1] = 0.5 * grid.h
    return w


def _cut_values(v: MassProfile, delta: float, cum: np.ndarray) -> tuple[np.ndarray, float]:
    """Node values of the cut profile and the cut location gamma.

    Zeroes everything left of gamma's cell and adjusts one or two node
    values so that the *trapezoid* integral removed equals delta exactly.
    """
    g = v.grid
    gamma = gamma_quantile(v, delta, _cum=cum)
    out = v.values.copy()
    if delta == 0.0:
        return out, gamma
    j = _quantile_cell(cum, delta)
    out[: j - 1] = 0.0
    h = g.h
    w_left = 0.5 * h if (j - 1 == 0) else h
    w_right = 0.5 * h if (j == g.count - 1) else h
    # mass of v strictly committed up to and including node j-1 under the
    # composite trapezoid weights
    left_mass = float(cum[j - 1]) + 0.5 * h * v.values[j - 1]
    theta = (left_mass - delta) / w_left
    if theta >= 0.0:
        out[j - 1] = theta
    else:
        out[j - 1] = 0.0
        out[j] = v.values[j] + theta * w_left / w_right
        if out[j] < 0.0:  # roundoff guard; analytically >= 0
            out[j] = 0.0
    return out, gamma


def cut(v: MassProfile, delta: float) -> MassProfile:
    """Remove the leftmost ``delta`` units of integral from ``v``.

    The output vanishes left of the quantile gamma and equals v to its
    right, with the cell containing gamma adjusted so the removed trapezoid
    integral is exactly delta.  ``cut(v, 0)`` returns v unchanged.
    """
    cum = node_cumulative(v)
    vals, _ = _cut_values(v, delta, cum)
    return v.with_values(vals, validate=False)


def cut_with_gamma(v: MassProfile, delta: float) -> tuple[MassProfile, float]:
    """Like :func:`cut` but also returns the cut location gamma."""
    cum = node_cumulative(v)
    vals, gamma = _cut_values(v, delta, cum)
    return v.with_values(vals, validate=False), gamma


def cut_band(v: MassProfile, Delta: float, delta: float) -> MassProfile:
    """Remove a ``delta``-integral band starting at mass depth ``Delta``.

    Keeps v on (-inf, gamma^Delta) and [gamma^{Delta+delta}, inf), zeroes the
    band between.  Implemented nodewise as v - cut(v, Delta) + cut(v,
    Delta+delta), which makes the removed integral exactly delta and keeps
    every left integral identity exact in trapezoid arithmetic.
    """
    if not (Delta > 0.0):
        raise DomainError(f"Delta must be > 0, got {Delta}")
    if delta < 0.0:
        raise DomainError(f"delta must be >= 0, got {delta}")
    cum = node_cumulative(v)
    shallow, _ = _cut_values(v, Delta, cum)
    deep, _ = _cut_values(v, Delta + delta, cum)
    vals = v.values - shallow + deep
    np.maximum(vals, 0.0, out=vals)  # roundoff guard
    return v.with_values(vals, validate=False)


# ----------------------------------------------------------------------
# the antiderivative partial order
# ----------------------------------------------------------------------

def default_order_tolerance(u: MassProfile, v: MassProfile) -> float:
    """Default slack for precede_mod: 3h * max(sup u, sup v).

    Bounds the accumulated trapezoid error of the two cumulative integrals
    on the shared window.
    """
    return 3.0 * u.grid.h * max(u.sup, v.sup)


def precede_mod(
    u: MassProfile,
    v: MassProfile,
    ell: float,
    tol: float | None = None,
) -> OrderCertificate:
    """Certificate for the bracket order  u ⪯ v mod ell.

    Checks ``integral_left(v, r) <= integral_left(u, r) + ell + tol`` at
    every grid node r.  Identical right tails make the node check
    sufficient; profiles must share a grid.
    """
    if u.grid != v.grid:
        raise UsageError("precede_mod requires a shared grid")
    if tol is None:
        tol = default_order_tolerance(u, v)
    gap = node_cumulative(v) - node_cumulative(u) - ell
    k = int(np.argmax(gap))
    worst = float(gap[k])
    return OrderCertificate(
        holds=bool(worst <= tol),
        worst_r=float(u.grid.x_lo + k * u.grid.h),
        worst_gap=worst,
        tol=float(tol),
    )


# ----------------------------------------------------------------------
# point measures on grids
# ----------------------------------------------------------------------

def cdf_of_points(mu: PointMeasure, grid: Grid) -> MassProfile:
    """Step CDF of an atomic measure sampled at the grid nodes.

    The tail is the constant F(x_hi); atoms beyond x_hi only enter through
    comparisons at r > x_hi, which callers should avoid (see d_flat_r).
    """
    vals = mu.cdf(grid.nodes())
    return MassProfile(grid, vals, TailModel.linear(float(vals[-1]), 0.0))


def node_masses(obj: PointMeasure | MassProfile, grid: Grid) -> np.ndarray:
    """Measure mass attributed to each grid node.

    Node j receives the measure of the cell (x_{j-1}, x_j]: atoms are binned
    to the right node of their cell and profiles contribute their CDF
    increments, so a point measure and its sampled CDF reduce to *identical*
    node masses (the displacement is at most h per unit mass, reported
    here for metric error accounting).  Mass beyond x_hi is excluded; keep
    comparisons at r <= x_hi.
    """
    if isinstance(obj, MassProfile):
        if obj.grid != grid:
            raise UsageError("profile grid does not match the metric grid")
        w = np.empty(grid.count)
        w[0] = obj.values[0]
        w[1:] = np.diff(obj.values)
        return w
    idx = np.ceil((obj.atoms - grid.x_lo) / grid.h - 1e-9).astype(np.int64)
    keep = (idx >= 0) & (idx < grid.count)
    return obj.weight * np.bincount(idx[keep], minlength=grid.count).astype(float)


# ----------------------------------------------------------------------
# bounded-Lipschitz (flat) metric
# ----------------------------------------------------------------------

def _resolve_grid(mu, nu, grid: Grid | None) -> Grid:
    for obj in (mu, nu):
        if isinstance(obj, MassProfile):
            if grid is not None and obj.grid != grid:
                raise UsageError("explicit grid conflicts with a profile grid")
            grid = obj.grid
    if grid is None:
        raise UsageError("a grid is required when both arguments are point measures")
    return grid


def _bl_lp_value(w: np.ndarray, h: float) -> float:
    """Exact supremum of sum_j f_j w_j over the discrete BL unit ball.

    Ball: exists s in [0,1] with |f_j| <= s and |f_{j+1} - f_j| <= (1-s) h,
    f pinned to zero beyond the last node (one more Lipschitz link).  Solved
    as a small LP (variables f_0..f_{M-1}, s); HiGHS is deterministic.
    """
    M = w.size
    if M == 0 or not np.any(np.abs(w) > 0.0):
        return 0.0
    # canonical sign for exact symmetry d(mu, nu) == d(nu, mu)
    first = np.nonzero(w)[0][0]
    if w[first] < 0:
        w = -w

    nvar = M + 1
    j = np.arange(M)
    jc = np.arange(M - 1)
    # box rows: f_j - s <= 0 and -f_j - s <= 0          (2M rows, 2 nnz each)
    box_r = np.repeat(np.arange(2 * M), 2)
    box_c = np.column_stack([np.repeat(j, 2), np.full(2 * M, M)]).reshape(-1)
    box_d = np.tile([1.0, -1.0, -1.0, -1.0], M)
    # chain rows: +-(f_{j+1} - f_j) + h s <= h          (2(M-1) rows, 3 nnz)
    ch_r = np.repeat(2 * M + np.arange(2 * (M - 1)), 3)
    ch_c = np.repeat(
        np.column_stack([jc + 1, jc, np.full(M - 1, M)]), 2, axis=0
    ).reshape(-1)
    ch_d = np.tile([1.0, -1.0, h, -1.0, 1.0, h], M - 1)
    # boundary rows: +- f_{M-1} + h s <= h (link to the pinned zero at r+)
    nb0 = 2 * M + 2 * (M - 1)
    bd_r = np.repeat(nb0 + np.arange(2), 2)
    bd_c = np.array([M - 1, M, M - 1, M])
    bd_d = np.array([1.0, h, -1.0, h])

    rows = nb0 + 2
    b = np.zeros(rows)
    b[2 * M :] = h
    A = csr_matrix(
        (
            np.concatenate([box_d, ch_d, bd_d]),
            (
                np.concatenate([box_r, ch_r, bd_r]),
                np.concatenate([box_c, ch_c, bd_c]),
            ),
        ),
        shape=(rows, nvar),
    )
    c = np.concatenate([-w, [0.0]])
    bounds = [(-1.0, 1.0)] * M + [(0.0, 1.0)]
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"flat-metric LP failed: {res.message}")
    return max(float(-res.fun), 0.0)


def d_flat_r(
    mu: PointMeasure | MassProfile,
    nu: PointMeasure | MassProfile,
    r: float,
    grid: Grid | None = None,
) -> float:
    """Bounded-Lipschitz distance restricted to test functions supported on
    (-inf, r]:  sup { integral f d(mu - nu) : ||f||_inf + Lip(f) <= 1 }.

    Both measures are reduced to signed node masses on a common grid and the
    supremum over grid-sampled test functions is computed exactly by a small
    linear program.  Symmetric; zero iff the signed masses vanish left of r.
    """
    g = _resolve_grid(mu, nu, grid)
    if r > g.x_hi + 0.5 * g.h:
        raise UsageError(
            f"support bound r={r:.6g} exceeds the metric grid (x_hi={g.x_hi:.6g})"
        )
    w = node_masses(mu, g) - node_masses(nu, g)
    M = g.index_left(r + 0.5 * g.h) + 1
    return _bl_lp_value(w[:M], g.h)


def d_star(
    mu: PointMeasure | MassProfile,
    nu: PointMeasure | MassProfile,
    r_max: int,
    grid: Grid | None = None,
) -> DStarResult:
    """Truncated aggregated metric  sum_{r=1..r_max} 2^-r (1 ∧ d_flat_r).

    The dropped tail of the series is bounded by 2^-r_max, reported in the
    result.
    """
    if r_max < 1:
        raise UsageError("r_max must be >= 1")
    g = _resolve_grid(mu, nu, grid)
    total = 0.0
    for r in range(1, r_max + 1):
        if r > g.x_hi + 0.5 * g.h:
            raise UsageError(
                f"r_max={r_max} exceeds the metric grid (x_hi={g.x_hi:.6g})"
            )
        total += 2.0 ** (-r) * min(1.0, d_flat_r(mu, nu, float(r), grid=g))
    return DStarResult(value=total, truncation_bound=2.0 ** (-r_max))


# ----------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------

def profile_to_csv(v: MassProfile, csv_path, meta_path) -> None:
    """Write `x,v` rows plus a JSON side-car with tail and spacing metadata."""
    x = v.grid.nodes()
    with open(csv_path, "w") as f:
        f.write("x,v\n")
        for xi, vi in zip(x, v.values):
            f.write(f"{float(xi)!r},{float(vi)!r}\n")
    meta = {
        "tail_kind": v.tail.kind,
        "tail_coefficients": list(v.tail.coefficients),
        "h": v.grid.h,
        "x_lo": v.grid.x_lo,
        "count": v.grid.count,
    }
    with open(meta_path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def profile_from_csv(csv_path, meta_path) -> MassProfile:
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    with open(meta_path) as f:
        meta = json.load(f)
    grid = Grid(x_lo=meta["x_lo"], h=meta["h"], count=meta["count"])
    tail = TailModel(meta["tail_kind"], tuple(meta["tail_coefficients"]))
    vals = np.atleast_2d(data)[:, 1]
    return MassProfile(grid, vals, tail, validate=False)


def points_to_csv(mu: PointMeasure, csv_path, meta_path) -> None:
    with open(csv_path, "w") as f:
        f.write("atom\n")
        for a in mu.atoms:
            f.write(f"{float(a)!r}\n")
    with open(meta_path, "w") as f:
        json.dump({"weight": mu.weight}, f, indent=2, sort_keys=True)
        f.write("\n")


def points_from_csv(csv_path, meta_path) -> PointMeasure:
    atoms = np.loadtxt(csv_path, skiprows=1, ndmin=1)
    with open(meta_path) as f:
        meta = json.load(f)
    return PointMeasure(atoms=atoms, weight=meta["weight"])
