"""Initial-condition generators and the exponential tail-bound checker.

An :class:`InitialDescriptor` declares the limiting initial mass profile
v0 (linear, power, or tabulated), with an optional linear floor for the
boundary-trajectory theory.  Particle configurations are produced either as
a Poisson point process whose mean measure is ``n * v0'(x) dx`` (exact in
law: positions are ``v0^{-1}(Gamma_i / n)`` for unit-exponential partial
sums) or as the deterministic quantile lattice ``x_i = f(i / n)``.

`check_tail_bound` verifies empirically that unit-interval particle counts
satisfy an exponential tail bound ``P(count_j / (n (1 + j^m)) > y) <=
C e^{-c y}``; for PPP inputs the constants follow the standard Chernoff
recipe (``alpha`` bounding the normalized intensity per unit interval,
``a = e^alpha - 1``, ``C = e^{alpha a}``, ``c = alpha``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import UsageError
from .mass_profile import Grid, MassProfile, TailModel

__all__ = [
    "InitialDescriptor",
    "TailBoundReport",
    "sample_ppp",
    "sample_deterministic",
    "check_tail_bound",
    "chernoff_constants",
    "wilson_bounds",
    "coverage_cap",
    "truncation_error_bound",
]


@dataclass(frozen=True)
class InitialDescriptor:
    """Limiting initial cumulative mass profile v0.

    model "linear": v0(x) = lam x+; "power": v0(x) = c x+^p; "table": a
    strictly increasing (x, v) table, interpolated linearly.  v0 is
    nonnegative, nondecreasing, zero on (-inf, 0), and diverges at +inf
    (for tables, divergence holds beyond the last breakpoint by linear
    continuation, which also fixes the declared polynomial bound).
    """

    model: str
    params: dict
    lambda0_floor: float | None = None

    def __post_init__(self):
        if self.model == "linear":
            if not (self.params.get("lam", 0.0) > 0.0):
                raise UsageError("linear model needs lam > 0")
        elif self.model == "power":
            if not (self.params.get("c", 0.0) > 0.0 and self.params.get("p", 0.0) > 0.0):
                raise UsageError("power model needs c > 0 and p > 0")
        elif self.model == "table":
            x = np.asarray(self.params["x"], dtype=float)
            v = np.asarray(self.params["v"], dtype=float)
            if x.ndim != 1 or x.shape != v.shape or x.size < 2:
                raise UsageError("table needs matching 1-D x and v arrays")
            if np.any(np.diff(x) <= 0) or np.any(np.diff(v) < 0):
                raise UsageError("table must be strictly increasing in x, nondecreasing in v")
            if x[0] < 0 or v[0] != 0.0:
                raise UsageError("table must start at x >= 0 with v = 0")
            if not np.any(np.diff(v) > 0):
                raise UsageError("table must carry mass")
        else:
            raise UsageError(f"unknown v0 model {self.model!r}")
        if self.lambda0_floor is not None:
            lam0 = self.lambda0_floor
            if not (lam0 > 0.0):
                raise UsageError("lambda0_floor must be positive")
            probe = np.linspace(1e-6, 100.0, 4097)
            if np.any(self.v0(probe) < lam0 * probe - 1e-9):
                raise UsageError(
                    f"declared floor {lam0} x+ exceeds v0 somewhere on (0, 100]")

    @classmethod
    def linear(cls, lam: float, lambda0_floor: float | None = None) -> "InitialDescriptor":
        if lambda0_floor is None:
            lambda0_floor = lam
        return cls("linear", {"lam": float(lam)}, lambda0_floor)

    @classmethod
    def power(cls, c: float, p: float) -> "InitialDescriptor":
        return cls("power", {"c": float(c), "p": float(p)})

    @classmethod
    def table(cls, x, v, lambda0_floor: float | None = None) -> "InitialDescriptor":
        return cls("table", {"x": list(map(float, x)), "v": list(map(float, v))},
                   lambda0_floor)

    # -- evaluation ----------------------------------------------------

    def v0(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xp = np.maximum(x, 0.0)
        if self.model == "linear":
            return self.params["lam"] * xp
        if self.model == "power":
            return self.params["c"] * xp ** self.params["p"]
        tx = np.asarray(self.params["x"])
        tv = np.asarray(self.params["v"])
        slope_end = (tv[-1] - tv[-2]) / (tx[-1] - tx[-2])
        out = np.interp(xp, tx, tv)
        beyond = xp > tx[-1]
        return np.where(beyond, tv[-1] + slope_end * (xp - tx[-1]), out)

    def v0_inverse(self, u) -> np.ndarray:
        """Leftmost x with v0(x) = u (monotone inversion, exact in law)."""
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise UsageError("mass levels must be nonnegative")
        if self.model == "linear":
            return u / self.params["lam"]
        if self.model == "power":
            return (u / self.params["c"]) ** (1.0 / self.params["p"])
        tx = np.asarray(self.params["x"])
        tv = np.asarray(self.params["v"])
        slope_end = (tv[-1] - tv[-2]) / (tx[-1] - tx[-2])
        # leftmost preimage: step over flat table segments
        keep = np.concatenate([[True], np.diff(tv) > 0])
        out = np.interp(u, tv[keep], tx[keep])
        beyond = u > tv[-1]
        if slope_end <= 0 and np.any(beyond):
            raise UsageError("table has no divergent continuation to invert")
        return np.where(beyond, tx[-1] + (u - tv[-1]) / max(slope_end, 1e-300), out)

    def to_profile(self, grid: Grid) -> MassProfile:
        vals = self.v0(grid.nodes())
        if self.model == "linear":
            tail = TailModel.linear(0.0, self.params["lam"])
        elif self.model == "power":
            tail = TailModel.power(self.params["c"], self.params["p"])
        else:
            c1 = float(self.v0(grid.x_hi + 1.0) - self.v0(grid.x_hi))
            tail = TailModel.linear(float(vals[-1]) - c1 * grid.x_hi, c1)
        return MassProfile(grid, vals, tail, junction_tol=1e-9)

    def to_json(self) -> str:
        return json.dumps(
            {"model": self.model, "params": self.params,
             "lambda0_floor": self.lambda0_floor},
            sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "InitialDescriptor":
        return cls(d["model"], d["params"], d.get("lambda0_floor"))


# ----------------------------------------------------------------------
# samplers
# ----------------------------------------------------------------------

def coverage_cap(desc: InitialDescriptor, boundary_estimate: float, window_width: float) -> float:
    """Rightmost position generated: boundary estimate plus the window."""
    return float(boundary_estimate + window_width)


def sample_ppp(desc: InitialDescriptor, n: int, seed: int, x_cov: float) -> np.ndarray:
    """Poisson point process with mean measure n dv0, truncated at x_cov.

    Positions are v0^{-1}(Gamma_i / n) for partial sums Gamma of unit
    exponentials, so counts in [0, x] are Poisson(n v0(x)) exactly.
    """
    if n < 1:
        raise UsageError("n must be >= 1")
    rng = np.random.default_rng(np.random.Philox(key=np.uint64(seed)))
    target = float(desc.v0(x_cov)) * n
    block = int(target + 8.0 * np.sqrt(target) + 16)
    gammas = np.cumsum(rng.exponential(1.0, size=block))
    while gammas[-1] < target:
        extra = np.cumsum(rng.exponential(1.0, size=block // 2 + 16)) + gammas[-1]
        gammas = np.concatenate([gammas, extra])
    gammas = gammas[gammas <= target]
    return np.asarray(desc.v0_inverse(gammas / n), dtype=float)


def sample_deterministic(f, n: int, count: int) -> np.ndarray:
    """Quantile lattice x_i = f(i / n), i = 0..count-1, for strictly
    increasing f with f(0) = 0."""
    if n < 1 or count < 1:
        raise UsageError("need n >= 1 and count >= 1")
    i = np.arange(count, dtype=float)
    x = np.asarray(f(i / n), dtype=float)
    if x[0] != 0.0 or np.any(np.diff(x) <= 0):
        raise UsageError("f must be strictly increasing with f(0) = 0")
    return x


def truncation_error_bound(
    desc: InitialDescriptor, n: int, x_cov: float, reach: float, T: float
) -> float:
    """Probability bound that any particle beyond the coverage cap dips to
    `reach` within [0, T]: sum of Gaussian tail bounds against the mean
    measure (drift can only push particles right)."""
    xs = np.linspace(x_cov, x_cov + 12.0 * np.sqrt(T) + 1.0, 2049)
    dens = np.gradient(desc.v0(xs), xs)
    tail = 0.5 * erfc((xs - reach) / np.sqrt(2.0 * T))
    return float(n * np.trapezoid(dens * tail, xs))


# ----------------------------------------------------------------------
# tail-bound checking
# ----------------------------------------------------------------------

def chernoff_constants(desc: InitialDescriptor, m: float | None = None) -> tuple[float, float, float]:
    """(m, C, c) for the unit-interval count bound of a PPP sample.

    The Chernoff route bounds the count in [0, j+1] by a Poisson of mean
    n alpha (1 + j^m) where alpha satisfies v0(j+1) <= alpha (1 + j^m) for
    all j (note the *cumulative* intensity, so constant densities need
    m = 1); then C = e^{alpha a}, c = alpha with a = e^alpha - 1.
    """
    if desc.model == "linear":
        m_eff = 1.0 if m is None else m
        lam = desc.params["lam"]
        j = np.arange(0, 4096, dtype=float)
        alpha = float(np.max(lam * (j + 1.0) / (1.0 + j ** m_eff)))
    else:
        if m is None:
            m_eff = desc.params["p"] if desc.model == "power" else 1.0
        else:
            m_eff = m
        j = np.arange(0, 4096, dtype=float)
        alpha = float(np.max(desc.v0(j + 1) / (1.0 + j ** m_eff)))
    a = np.expm1(alpha)
    return m_eff, float(np.exp(alpha * a)), float(alpha)


def wilson_bounds(successes: int, trials: int, z: float = 1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise UsageError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = (z / denom) * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return max(center - half, 0.0), min(center + half, 1.0)


@dataclass(frozen=True)
class TailBoundReport:
    m: float
    C: float
    c: float
    trials: int
    n_list: tuple
    y_grid: tuple
    worst_excess: float   # max over lattice of (wilson lower bound - bound)
    failures: tuple       # (n, j, y, freq, wilson_lo, bound) tuples

    @property
    def passed(self) -> bool:
        return len(self.failures) == 0


def check_tail_bound(
    sampler,
    n_list,
    m: float,
    C: float,
    c: float,
    trials: int = 200,
    j_max: int = 4,
    y_grid=None,
    seed: int = 0,
) -> TailBoundReport:
    """Empirical verdict on  P(count[j, j+1] / (n (1 + j^m)) > y) <= C e^{-cy}.

    `sampler(n, seed)` returns one sorted configuration.  For every (n, j, y)
    lattice point, the exceedance frequency's 95% Wilson lower bound must not
    exceed the claimed bound; violations are statistically significant
    failures.
    """
    if trials < 100:
        raise UsageError("need at least 100 trials for the Wilson gate")
    if y_grid is None:
        # cover the regime where the bound bites (C e^{-cy} < 1) plus slack
        y_hi = (np.log(C) + 6.0) / c
        y_grid = tuple(np.linspace(max(y_hi / 8.0, 0.25), y_hi, 6))
    failures = []
    worst = -np.inf
    for n in n_list:
        counts = np.zeros((trials, j_max), dtype=float)
        for t in range(trials):
            x = sampler(n, seed + 7919 * t)
            for j in range(j_max):
                lo = np.searchsorted(x, j, side="right")
                hi = np.searchsorted(x, j + 1, side="right")
                counts[t, j] = (hi - lo) / n
        for j in range(j_max):
            norm = counts[:, j] / (1.0 + float(j) ** m)  # 0^0 == 1 convention
            for y in y_grid:
                exceed = int(np.sum(norm > y))
                wl, _ = wilson_bounds(exceed, trials)
                bound = min(1.0, C * np.exp(-c * y))
                worst = max(worst, wl - bound)
                if wl > bound:
                    failures.append((n, j, float(y), exceed / trials, wl, bound))
    return TailBoundReport(
        m=m, C=C, c=c, trials=trials, n_list=tuple(n_list),
        y_grid=tuple(float(y) for y in y_grid),
        worst_excess=float(worst), failures=tuple(failures),
    )
