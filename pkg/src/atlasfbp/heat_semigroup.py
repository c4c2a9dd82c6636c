"""Gaussian kernel, the smoothing semigroup on grid profiles, and the
single-layer potential of a moving boundary.

The semigroup acts on a :class:`~atlasfbp.mass_profile.MassProfile` by exact
integration of the piecewise-linear interpolant against the Gaussian kernel:
node weights come from integrating the kernel against the PL hat basis, so
the only discretization error is the O(h^2) interpolation error of the input
(and of the tail samples used to pad the window).  Kernels are truncated at
``truncation_radius_sigmas`` standard deviations; the neglected mass
erfc(radius/sqrt(2)) is recorded on the spec.

The boundary potential integrates the kernel along a piecewise-linear
trajectory; the integrable endpoint singularity is removed exactly by the
substitution u = sqrt(t - s), after which fixed-order Gauss-Legendre
quadrature per time cell applies to a smooth integrand.

Everything here is a pure function with a fixed summation order, so results
are bit-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, ndtr
from numpy.polynomial.legendre import leggauss

from .boundary import BoundaryPath
from .errors import DomainError, UsageError
from .mass_profile import Grid, MassProfile, TailModel

__all__ = [
    "KernelSpec",
    "heat_kernel",
    "hat_kernel_weights",
    "smooth",
    "smooth_initial",
    "boundary_potential",
]

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class KernelSpec:
    """Truncation and quadrature parameters for kernel operations."""

    truncation_radius_sigmas: float = 8.0
    quadrature_order: int = 16

    @property
    def truncation_mass_error(self) -> float:
        return float(erfc(self.truncation_radius_sigmas / np.sqrt(2.0)))


DEFAULT_KERNEL = KernelSpec()


def heat_kernel(t: float, x) -> np.ndarray | float:
    """Gaussian kernel (2 pi t)^{-1/2} exp(-x^2 / (2 t)) for t > 0."""
    if not (t > 0.0):
        raise DomainError(f"heat_kernel needs t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x / t) / (_SQRT_2PI * np.sqrt(t))
    return float(out) if out.ndim == 0 else out


def _gauss_cell_integrals(z: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell integrals of 1 and z against the Gaussian of variance t.

    Given sorted breakpoints z, returns I0[c] = int_{z_c}^{z_{c+1}} p_t(z) dz
    and I1[c] = int z p_t(z) dz over the same cells (both exact).
    """
    rt = np.sqrt(t)
    cdf = ndtr(z / rt)
    pdf = np.exp(-0.5 * z * z / t) / (_SQRT_2PI * rt)
    return np.diff(cdf), t * -np.diff(pdf)


def hat_kernel_weights(delta: float, h: float, spec: KernelSpec = DEFAULT_KERNEL) -> np.ndarray:
    """Node weights of the smoothing operator: c_m = int p_delta(z) hat_m(z) dz.

    hat_m is the PL basis function at offset m*h.  The weights are symmetric,
    nonnegative, and sum to 1 up to the recorded truncation error, so the
    operator preserves constants, monotonicity, and linear functions on the
    interior.
    """
    if not (delta > 0.0):
        raise DomainError(f"smoothing time must be > 0, got {delta}")
    K = max(int(np.ceil(spec.truncation_radius_sigmas * np.sqrt(delta) / h)), 1)
    m = np.arange(-K, K + 1)
    lo, mid, hi = (m - 1) * h, m * h, (m + 1) * h
    I0l, I1l = _gauss_cell_integrals_pair(lo, mid, delta)
    I0r, I1r = _gauss_cell_integrals_pair(mid, hi, delta)
    c = (1.0 - m) * I0l + I1l / h + (1.0 + m) * I0r - I1r / h
    c = 0.5 * (c + c[::-1])  # exact symmetry (kills roundoff odd modes)
    np.maximum(c, 0.0, out=c)  # roundoff guard at the truncated ends
    return c


def _gauss_cell_integrals_pair(a: np.ndarray, b: np.ndarray, t: float):
    rt = np.sqrt(t)
    I0 = ndtr(b / rt) - ndtr(a / rt)
    pa = np.exp(-0.5 * a * a / t) / (_SQRT_2PI * rt)
    pb = np.exp(-0.5 * b * b / t) / (_SQRT_2PI * rt)
    I1 = t * (pa - pb)
    return I0, I1


def smooth(
    v: MassProfile, delta: float, spec: KernelSpec = DEFAULT_KERNEL
) -> MassProfile:
    """Heat-smooth a profile for time ``delta``; the tail model carries over.

    The window is padded on the left with zeros (profiles vanish left of
    their support) and on the right with tail samples, so edge nodes see the
    correct analytic continuation.  Exact for linear tails; power tails incur
    the PL sampling error of the padding.
    """
    if not (delta > 0.0):
        raise DomainError(f"smoothing time must be > 0, got {delta}")
    g = v.grid
    c = hat_kernel_weights(delta, g.h, spec)
    K = (c.size - 1) // 2
    right = v.tail(g.x_hi + g.h * np.arange(1, K + 1))
    padded = np.concatenate([np.zeros(K), v.values, right])
    out = np.convolve(padded, c, mode="valid")
    np.maximum(out, 0.0, out=out)
    junction = abs(float(out[-1]) - float(v.tail(g.x_hi)))
    tol = max(v.junction_tol, 1e-9 * (1.0 + v.sup), 1.0000001 * junction)
    return MassProfile(g, out, v.tail, junction_tol=tol, validate=v.validate)


def smooth_initial(
    v0: MassProfile,
    t: float,
    x,
    spec: KernelSpec = DEFAULT_KERNEL,
    chunk: int = 256,
) -> np.ndarray | float:
    """Pointwise heat evolution of the initial profile: (S_t v0)(x).

    Exact for the PL interpolant plus the analytic tail (closed form for
    linear and zero tails, Gauss-Legendre for power tails).  Accepts scalar
    or array x at arbitrary t > 0.
    """
    if not (t > 0.0):
        raise DomainError(f"smooth_initial needs t > 0, got {t}")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    g = v0.grid
    nodes = g.nodes()
    vals = v0.values
    slopes = np.diff(vals) / g.h
    out = np.empty(xs.size)
    for start in range(0, xs.size, chunk):
        xb = xs[start : start + chunk, None]  # (B, 1)
        z = nodes[None, :] - xb               # (B, N)
        I0, I1 = _gauss_cell_integrals_batch(z, t)
        coeff = vals[None, :-1] + slopes[None, :] * (xb - nodes[None, :-1])
        out[start : start + chunk] = np.sum(coeff * I0 + slopes[None, :] * I1, axis=1)
    out += _tail_smear(v0.tail, g.x_hi, t, xs, spec)
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(out[0])
    return out


def _gauss_cell_integrals_batch(z: np.ndarray, t: float):
    rt = np.sqrt(t)
    cdf = ndtr(z / rt)
    pdf = np.exp(-0.5 * z * z / t) / (_SQRT_2PI * rt)
    return np.diff(cdf, axis=-1), t * -np.diff(pdf, axis=-1)


def _tail_smear(
    tail: TailModel, x_hi: float, t: float, xs: np.ndarray, spec: KernelSpec
) -> np.ndarray:
    """int_{x_hi}^inf p_t(y - x) tail(y) dy for a batch of x."""
    if tail.kind == "zero":
        return np.zeros(xs.size)
    rt = np.sqrt(t)
    A = x_hi - xs
    if tail.kind == "linear":
        c0, c1 = tail.coefficients
        Q = ndtr(-A / rt)
        pA = np.exp(-0.5 * A * A / t) / (_SQRT_2PI * rt)
        return (c0 + c1 * xs) * Q + c1 * t * pA
    # power tail: fixed-order quadrature over the effective kernel support
    c, p = tail.coefficients
    upper = max(float(np.max(xs)), x_hi) + spec.truncation_radius_sigmas * rt
    if upper <= x_hi:
        return np.zeros(xs.size)
    nodes, weights = leggauss(max(spec.quadrature_order, 32))
    # split into panels of width ~2 sigma for accuracy
    n_panels = max(int(np.ceil((upper - x_hi) / (2.0 * rt))), 1)
    edges = np.linspace(x_hi, upper, n_panels + 1)
    out = np.zeros(xs.size)
    for a, b in zip(edges[:-1], edges[1:]):
        y = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        w = 0.5 * (b - a) * weights
        fy = c * np.power(y, p)
        zz = (y[None, :] - xs[:, None]) / rt
        ker = np.exp(-0.5 * zz * zz) / (_SQRT_2PI * rt)
        out += ker @ (w * fy)
    return out


def boundary_potential(
    sigma: BoundaryPath,
    t: float,
    x,
    spec: KernelSpec = DEFAULT_KERNEL,
) -> np.ndarray | float:
    """Single-layer potential  int_0^t p_{t-s}(sigma_s - x) ds.

    sigma is piecewise linear; the substitution u = sqrt(t - s) removes the
    endpoint singularity exactly, and Gauss-Legendre of the configured order
    is applied per trajectory cell in u.  The result lies in
    [0, sqrt(2 t / pi)].
    """
    if t < 0.0:
        raise DomainError(f"potential time must be >= 0, got {t}")
    if t == 0.0:
        out = np.zeros(np.atleast_1d(np.asarray(x, dtype=float)).shape)
        return float(out[0]) if np.asarray(x).ndim == 0 else out
    if not sigma.covers(0.0, t):
        raise UsageError(
            f"path on [{sigma.t0}, {sigma.t1}] does not cover [0, {t}]"
        )
    return _potential_along(sigma, 0.0, t, t, x, spec)


def _potential_along(
    sigma: BoundaryPath, s_lo: float, s_hi: float, t: float, x, spec: KernelSpec
) -> np.ndarray | float:
    """int_{s_lo}^{s_hi} p_{t-s}(sigma_s - x) ds  with s_hi <= t."""
    sub = sigma.restrict(s_lo, s_hi)
    tau, y = sub.times, sub.values
    # u-cells run from the late end (small u) to the early end
    u_edges = np.sqrt(np.maximum(t - tau, 0.0))
    gl_nodes, gl_w = leggauss(spec.quadrature_order)
    us, ws, ss = [], [], []
    for k in range(tau.size - 1):
        ua, ub = u_edges[k + 1], u_edges[k]  # ua < ub
        if ub - ua <= 0.0:
            continue
        # octave panels toward the singular end: the integrand's transition
        # scale in u is not known a priori (it depends on x), but it is
        # analytic on any interval with bounded upper/lower ratio
        edges = [ub]
        while edges[-1] * 0.5 > ua * 1.0000001 and len(edges) <= 7:
            edges.append(edges[-1] * 0.5)
        edges.append(ua)
        for pa, pb in zip(edges[1:], edges[:-1]):
            u = 0.5 * (pb - pa) * gl_nodes + 0.5 * (pa + pb)
            us.append(u)
            ws.append(0.5 * (pb - pa) * gl_w)
            ss.append(k * np.ones(u.size, dtype=int))
    if not us:
        out = np.zeros(np.atleast_1d(np.asarray(x, dtype=float)).shape)
        return float(out[0]) if np.asarray(x).ndim == 0 else out
    u = np.concatenate(us)
    w = np.concatenate(ws)
    cell = np.concatenate(ss)
    s = t - u * u
    slope = (y[cell + 1] - y[cell]) / (tau[cell + 1] - tau[cell])
    sig = y[cell] + slope * (s - tau[cell])
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    dz = (sig[None, :] - xs[:, None]) / np.maximum(u[None, :], 1e-300)
    integ = np.sqrt(2.0 / np.pi) * np.exp(-0.5 * dz * dz)
    out = integ @ w
    if np.asarray(x).ndim == 0:
        return float(out[0])
    return out
