"""Free-boundary trajectories and space-time boundary occupation measures.

A :class:`BoundaryPath` is a time-gridded trajectory sigma_t, interpolated
piecewise linearly; it induces the boundary measure beta(dx, dt) =
delta_{sigma_t}(dx) dt.  A :class:`BoundaryHistogramMeasure` is the binned
form of such a measure, either converted exactly from a path or accumulated
during a particle simulation; its defining normalization is that the mass of
every time slab equals the slab's width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError

__all__ = ["BoundaryPath", "BoundaryHistogramMeasure", "path_to_histogram"]


@dataclass(frozen=True)
class BoundaryPath:
    """Piecewise-linear trajectory t -> sigma_t on a strictly increasing
    time grid."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=float)
        v = np.ascontiguousarray(self.values, dtype=float)
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if t.ndim != 1 or t.shape != v.shape or t.size < 1:
            raise UsageError("times/values must be matching 1-D arrays")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise UsageError("path times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise UsageError("path entries must be finite")

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def covers(self, a: float, b: float, tol: float = 1e-12) -> bool:
        return self.t0 <= a + tol and self.t1 >= b - tol

    def restrict(self, a: float, b: float) -> "BoundaryPath":
        """Sub-path on [a, b] with exact endpoint knots inserted."""
        if not self.covers(a, b) or b <= a:
            raise UsageError(f"path on [{self.t0}, {self.t1}] cannot cover [{a}, {b}]")
        inner = (self.times > a) & (self.times < b)
        t = np.concatenate([[a], self.times[inner], [b]])
        return BoundaryPath(t, self(t))

    def max_step_jump(self) -> float:
        if self.values.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self.values))))


@dataclass(frozen=True)
class BoundaryHistogramMeasure:
    """(x, t)-binned boundary occupation measure; mass carries units of time.

    mass[i, k] is the time spent in space bin i during time slab k, so the
    slab totals reproduce the slab widths.
    """

    x_edges: np.ndarray
    t_edges: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        xe = np.ascontiguousarray(self.x_edges, dtype=float)
        te = np.ascontiguousarray(self.t_edges, dtype=float)
        m = np.ascontiguousarray(self.mass, dtype=float)
        for a in (xe, te, m):
            a.setflags(write=False)
        object.__setattr__(self, "x_edges", xe)
        object.__setattr__(self, "t_edges", te)
        object.__setattr__(self, "mass", m)
        if m.shape != (xe.size - 1, te.size - 1):
            raise UsageError(
                f"mass shape {m.shape} does not match bin edges "
                f"({xe.size - 1} x {te.size - 1})"
            )
        if np.any(m < 0):
            raise UsageError("histogram mass must be nonnegative")

    @property
    def x_centers(self) -> np.ndarray:
        return 0.5 * (self.x_edges[:-1] + self.x_edges[1:])

    @property
    def t_centers(self) -> np.ndarray:
        return 0.5 * (self.t_edges[:-1] + self.t_edges[1:])

    def slab_totals(self) -> np.ndarray:
        return self.mass.sum(axis=0)

    def normalization_defect(self) -> float:
        """Worst |slab mass - slab width| over all time slabs."""
        widths = np.diff(self.t_edges)
        return float(np.max(np.abs(self.slab_totals() - widths)))

    def mass_within(self, center_of_slab, halfwidth_bins: int) -> np.ndarray:
        """Per-slab fraction of mass within +-halfwidth_bins space bins of a
        reference location (callable t -> x or array per slab)."""
        nbins = self.x_edges.size - 1
        out = np.empty(self.t_edges.size - 1)
        totals = self.slab_totals()
        for k, tc in enumerate(self.t_centers):
            ref = center_of_slab(tc) if callable(center_of_slab) else center_of_slab[k]
            i = int(np.clip(np.searchsorted(self.x_edges, ref, side="right") - 1, 0, nbins - 1))
            lo, hi = max(i - halfwidth_bins, 0), min(i + halfwidth_bins + 1, nbins)
            out[k] = self.mass[lo:hi, k].sum() / totals[k] if totals[k] > 0 else 1.0
        return out


def _segment_bin_times(y0: float, y1: float, ds: float, x_edges: np.ndarray) -> np.ndarray:
    """Exact time spent per space bin by a linear segment of duration ds."""
    nb = x_edges.size - 1
    out = np.zeros(nb)
    lo, hi = (y0, y1) if y0 <= y1 else (y1, y0)
    if hi - lo < 1e-300:  # constant segment: all time in one bin
        i = int(np.clip(np.searchsorted(x_edges, lo, side="right") - 1, 0, nb - 1))
        out[i] = ds
        return out
    # clamp to the histogram range so no time is lost off the edges
    left = np.maximum(x_edges[:-1], lo)
    right = np.minimum(x_edges[1:], hi)
    overlap = np.maximum(right - left, 0.0)
    below = max(lo, min(x_edges[0], hi)) - lo  # portion under the first edge
    above = hi - min(hi, max(x_edges[-1], lo))
    scale = ds / (hi - lo)
    out[:] = overlap * scale
    out[0] += below * scale
    out[-1] += above * scale
    return out


def path_to_histogram(
    path: BoundaryPath, x_edges: np.ndarray, t_edges: np.ndarray
) -> BoundaryHistogramMeasure:
    """Exact histogram of the occupation measure induced by a path.

    Every time slab's mass equals its width exactly (values outside the
    space range are clamped into the edge bins).
    """
    x_edges = np.asarray(x_edges, dtype=float)
    t_edges = np.asarray(t_edges, dtype=float)
    if not path.covers(t_edges[0], t_edges[-1]):
        raise UsageError("path does not cover the requested time slabs")
    nb = x_edges.size - 1
    mass = np.zeros((nb, t_edges.size - 1))
    for k in range(t_edges.size - 1):
        sub = path.restrict(float(t_edges[k]), float(t_edges[k + 1]))
        t, y = sub.times, sub.values
        for s in range(t.size - 1):
            ds = float(t[s + 1] - t[s])
            if ds > 0.0:
                mass[:, k] += _segment_bin_times(float(y[s]), float(y[s + 1]), ds, x_edges)
    return BoundaryHistogramMeasure(x_edges, t_edges, mass)
