"""Difference operators and Monte Carlo estimators for Poisson functionals.

All estimators take a :class:`~pvlab.process.SeedSpec`; replication ``r``
draws from stream ``(experiment, r)``, so the same seed reproduces the same
configurations across estimators (common random numbers).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from pvlab.process import (
    PointConfiguration,
    SeedSpec,
    Window,
    map_replications,
    sample_poisson,
)

__all__ = [
    "CovarianceEstimate",
    "DirichletEstimate",
    "EstimateWithCI",
    "EstimationError",
    "Functional",
    "SandwichResult",
    "ScalingFit",
    "difference",
    "estimate_covariance",
    "estimate_dirichlet",
    "estimate_variance",
    "first_chaos_bound",
    "poincare_upper_bound",
    "sandwich",
    "scaling_regression",
    "second_difference",
    "theorem1_lower_bound",
    "theorem1_lower_bound_ci",
]

N_BOOTSTRAP = 1000


class EstimationError(RuntimeError):
    """A functional evaluation or estimator input was unusable."""


class Functional:
    """A real-valued map on point configurations, with a label.

    ``evaluate`` must be deterministic and invariant under reordering of the
    points. Functionals support ``+``, ``-`` and scalar ``*`` so linear
    combinations can be fed to the same estimators.
    """

    def __init__(self, evaluate: Callable[[PointConfiguration], float], label: str):
        self.evaluate = evaluate
        self.label = label

    def __call__(self, config: PointConfiguration) -> float:
        return float(self.evaluate(config))

    def __repr__(self) -> str:
        return f"Functional({self.label!r})"

    def __add__(self, other: "Functional") -> "Functional":
        return Functional(lambda c: self(c) + other(c), f"({self.label} + {other.label})")

    def __sub__(self, other: "Functional") -> "Functional":
        return Functional(lambda c: self(c) - other(c), f"({self.label} - {other.label})")

    def __mul__(self, a: float) -> "Functional":
        a = float(a)
        return Functional(lambda c: a * self(c), f"{a:g}*{self.label}")

    __rmul__ = __mul__

    def __neg__(self) -> "Functional":
        return self * -1.0


def _eval(F: Functional, config: PointConfiguration) -> float:
    try:
        return F(config)
    except Exception as exc:
        raise EstimationError(f"{F.label} failed on {config!r}: {exc}") from exc


def difference(F: Functional, config: PointConfiguration, x) -> float:
    """Add-one cost ``F(config + x) - F(config)``."""
    return _eval(F, config.add(np.asarray(x, dtype=np.float64))) - _eval(F, config)


def second_difference(F: Functional, config: PointConfiguration, x, y) -> float:
    """``F(c+x+y) - F(c+x) - F(c+y) + F(c)``; symmetric in ``x`` and ``y``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    # canonical insertion order: exact symmetry even when float summation
    # inside F depends on point order
    a, b = (x, y) if tuple(x) <= tuple(y) else (y, x)
    fa = _eval(F, config.add(a))
    fb = _eval(F, config.add(b))
    return _eval(F, config.add(a, b)) - fa - fb + _eval(F, config)


@dataclass(frozen=True)
class EstimateWithCI:
    estimate: float
    std_error: float
    n_reps: int
    ci_level: float
    ci: tuple[float, float]
    wall_time_ms: float = field(default=0.0, compare=False)

    @classmethod
    def from_samples(cls, samples, ci_level: float = 0.95, wall_time_ms: float = 0.0) -> "EstimateWithCI":
        """Mean of i.i.d. samples with a normal-approximation interval."""
        x = np.asarray(samples, dtype=np.float64)
        n = len(x)
        if n < 2:
            raise EstimationError("need at least two replications")
        mean = float(x.mean())
        se = float(x.std(ddof=1) / math.sqrt(n))
        return cls.normal(mean, se, n, ci_level, wall_time_ms)

    @classmethod
    def normal(cls, estimate: float, se: float, n: int, ci_level: float = 0.95,
               wall_time_ms: float = 0.0) -> "EstimateWithCI":
        z = float(stats.norm.ppf(0.5 + ci_level / 2))
        return cls(float(estimate), float(se), int(n), ci_level,
                   (float(estimate - z * se), float(estimate + z * se)), wall_time_ms)

    @property
    def lo(self) -> float:
        return self.ci[0]

    @property
    def hi(self) -> float:
        return self.ci[1]

    def to_record(self, label: str, seed: SeedSpec | int | None = None) -> dict:
        """Flat JSON-ready dict in the standard estimator record layout."""
        if isinstance(seed, SeedSpec):
            seed = seed.master_seed
        return {
            "label": label,
            "estimate": self.estimate,
            "std_error": self.std_error,
            "n_reps": self.n_reps,
            "ci_level": self.ci_level,
            "ci_lo": self.ci[0],
            "ci_hi": self.ci[1],
            "seed": seed,
            "wall_time_ms": self.wall_time_ms,
        }


@dataclass(frozen=True)
class DirichletEstimate:
    """Estimates of ``E int (D_x F)^2`` and ``E int int (D^2_{x,y} F)^2``.

    ``covariance`` is the 2x2 covariance of the two replication means, used
    for delta-method errors of derived bounds.
    """

    first_order: EstimateWithCI
    second_order: EstimateWithCI
    alpha_hat: float
    covariance: np.ndarray = field(repr=False, compare=False, default=None)


def _check_reps(n_reps: int) -> None:
    if n_reps < 2:
        raise EstimationError(f"n_reps must be >= 2, got {n_reps}")


def _four_point_samples(F, window, intensity, n_reps, seed, workers):
    """Per replication: F(eta), F(eta+x), F(eta+y), F(eta+x+y)."""

    def one(r):
        rs = seed.replication(r)
        rng = rs.rng()
        eta = sample_poisson(window, intensity, rng)
        x, y = window.sample_uniform(rng, 2)
        vals = (_eval(F, eta), _eval(F, eta.add(x)), _eval(F, eta.add(y)), _eval(F, eta.add(x, y)))
        if not all(math.isfinite(v) for v in vals):
            raise EstimationError(f"{F.label}: non-finite value {vals} in replication {rs}")
        return vals

    return np.asarray(map_replications(one, n_reps, workers), dtype=np.float64).reshape(n_reps, 4)


def _dirichlet_from(vals: np.ndarray, mass: float, ci_level: float, ms: float) -> DirichletEstimate:
    f0, fx, fy, fxy = vals.T
    first = mass * 0.5 * ((fx - f0) ** 2 + (fy - f0) ** 2)
    second = mass**2 * (fxy - fx - fy + f0) ** 2
    n = len(first)
    fo = EstimateWithCI.from_samples(first, ci_level, ms)
    so = EstimateWithCI.from_samples(second, ci_level, ms)
    cov = np.cov(np.stack([first, second])) / n
    alpha = so.estimate / fo.estimate if fo.estimate > 0 else math.inf
    return DirichletEstimate(fo, so, alpha, cov)


def estimate_dirichlet(F: Functional, window: Window, intensity: float, n_reps: int,
                       seed: SeedSpec, ci_level: float = 0.95, workers: int | None = None
                       ) -> DirichletEstimate:
    """Monte Carlo estimate of both Dirichlet-type integrals and their ratio.

    Each replication draws one configuration and two independent uniform
    points ``x, y`` in ``window``. With ``m = intensity * vol(window)``,
    ``m * (D_x F)^2`` (averaged over ``x`` and ``y``) and
    ``m**2 * (D^2_{x,y} F)^2`` are unbiased for the two integrals.
    """
    _check_reps(n_reps)
    t0 = time.perf_counter()
    vals = _four_point_samples(F, window, intensity, n_reps, seed, workers)
    ms = 1e3 * (time.perf_counter() - t0)
    return _dirichlet_from(vals, intensity * window.volume(), ci_level, ms)


def theorem1_lower_bound(de: DirichletEstimate) -> float:
    """Empirical reversed-Poincare bound ``4 / (alpha + 2)^2 * E int (D_x F)^2``.

    ``alpha`` is the estimated ratio of the two integrals, so this is an
    estimate of the bound, not a certified one.
    """
    a = de.first_order.estimate
    if not math.isfinite(a):
        raise EstimationError("first-order estimate is not finite")
    if math.isinf(de.alpha_hat):
        return 0.0
    return 4.0 / (de.alpha_hat + 2.0) ** 2 * a


def theorem1_lower_bound_ci(de: DirichletEstimate) -> EstimateWithCI:
    """Lower bound with a delta-method standard error."""
    a, b = de.first_order.estimate, de.second_order.estimate
    bound = theorem1_lower_bound(de)
    if a <= 0 or de.covariance is None:
        return EstimateWithCI.normal(bound, 0.0, de.first_order.n_reps, de.first_order.ci_level)
    den = (b + 2 * a) ** 3
    grad = np.array([4 * a * a * (3 * b + 2 * a) / den, -8 * a**3 / den])
    se = math.sqrt(max(float(grad @ de.covariance @ grad), 0.0))
    return EstimateWithCI.normal(bound, se, de.first_order.n_reps, de.first_order.ci_level)


def poincare_upper_bound(de: DirichletEstimate) -> float:
    return de.first_order.estimate


def first_chaos_bound(F: Functional, window: Window, intensity: float, n_reps: int,
                      seed: SeedSpec, n_inner: int = 64, ci_level: float = 0.95,
                      workers: int | None = None) -> EstimateWithCI:
    """Estimate ``int (E D_x F)^2 d lambda`` by nested sampling.

    Outer replications draw ``x``; an inner batch of ``n_inner`` independent
    configurations gives the mean and sample variance of ``D_x F`` and
    ``mean**2 - var / n_inner`` is unbiased for the squared expectation.
    Where ``E D_x F`` vanishes the estimate is centred at zero and may be
    negative.
    """
    _check_reps(n_reps)
    if n_inner < 2:
        raise EstimationError(f"inner sample count must be >= 2, got {n_inner}")
    mass = intensity * window.volume()
    t0 = time.perf_counter()

    def one(r):
        rs = seed.replication(r)
        rng = rs.rng()
        x = window.sample_uniform(rng, 1)[0]
        counts = rng.poisson(mass, n_inner)
        pts = np.ascontiguousarray(window.sample_uniform(rng, int(counts.sum())))
        pts.flags.writeable = False  # read-only row slices become configurations without copying
        cuts = np.concatenate([[0], np.cumsum(counts)])
        xrow = x[None, :]
        diffs = np.empty(n_inner)
        for j in range(n_inner):
            block = pts[cuts[j]:cuts[j + 1]]
            eta = PointConfiguration(block, window.dim)
            plus = PointConfiguration._owned(np.concatenate([block, xrow]), window.dim)
            diffs[j] = _eval(F, plus) - _eval(F, eta)
        if not np.all(np.isfinite(diffs)):
            raise EstimationError(f"{F.label}: non-finite difference in replication {rs}")
        return mass * (diffs.mean() ** 2 - diffs.var(ddof=1) / n_inner)

    samples = map_replications(one, n_reps, workers)
    return EstimateWithCI.from_samples(samples, ci_level, 1e3 * (time.perf_counter() - t0))


def _sample_values(Fs: Sequence[Functional], window, intensity, n_reps, seed, workers) -> np.ndarray:
    def one(r):
        rs = seed.replication(r)
        eta = sample_poisson(window, intensity, rs.rng())
        vals = [_eval(F, eta) for F in Fs]
        if not all(math.isfinite(v) for v in vals):
            raise EstimationError(f"non-finite functional value {vals} in replication {rs}")
        return vals

    return np.asarray(map_replications(one, n_reps, workers), dtype=np.float64).reshape(n_reps, len(Fs))


def _percentile_ci(point: float, boot: np.ndarray, n: int, ci_level: float, ms: float) -> EstimateWithCI:
    tail = 100 * (1 - ci_level) / 2
    lo, hi = np.percentile(boot, [tail, 100 - tail])
    return EstimateWithCI(float(point), float(boot.std(ddof=1)), n, ci_level,
                          (float(min(lo, point)), float(max(hi, point))), ms)


def variance_from_samples(values, seed: SeedSpec, ci_level: float = 0.95,
                          n_boot: int = N_BOOTSTRAP, wall_time_ms: float = 0.0) -> EstimateWithCI:
    """Unbiased sample variance with a percentile-bootstrap interval."""
    v = np.asarray(values, dtype=np.float64)
    n = len(v)
    if n < 2:
        raise EstimationError("need at least two replications")
    if not np.all(np.isfinite(v)):
        raise EstimationError("non-finite functional values")
    rng = seed.aux_rng(0)
    boot = np.empty(n_boot)
    step = max(1, 2_000_000 // n)
    for a in range(0, n_boot, step):
        b = min(a + step, n_boot)
        boot[a:b] = v[rng.integers(0, n, size=(b - a, n))].var(axis=1, ddof=1)
    return _percentile_ci(v.var(ddof=1), boot, n, ci_level, wall_time_ms)


def estimate_variance(F: Functional, window: Window, intensity: float, n_reps: int,
                      seed: SeedSpec, ci_level: float = 0.95, n_boot: int = N_BOOTSTRAP,
                      workers: int | None = None) -> EstimateWithCI:
    _check_reps(n_reps)
    t0 = time.perf_counter()
    vals = _sample_values([F], window, intensity, n_reps, seed, workers)[:, 0]
    return variance_from_samples(vals, seed, ci_level, n_boot, 1e3 * (time.perf_counter() - t0))


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    min_eigenvalue: EstimateWithCI
    positive_definite: bool
    labels: tuple[str, ...]


def covariance_from_samples(values, seed: SeedSpec, labels: Sequence[str] = (),
                            ci_level: float = 0.95, n_boot: int = N_BOOTSTRAP,
                            wall_time_ms: float = 0.0) -> CovarianceEstimate:
    v = np.asarray(values, dtype=np.float64)
    n, m = v.shape
    if n < 2:
        raise EstimationError("need at least two replications")
    cov = np.cov(v, rowvar=False).reshape(m, m)
    rng = seed.aux_rng(1)
    boot = np.empty(n_boot)
    for b in range(n_boot):
        s = v[rng.integers(0, n, size=n)]
        boot[b] = np.linalg.eigvalsh(np.cov(s, rowvar=False).reshape(m, m))[0]
    lam = _percentile_ci(np.linalg.eigvalsh(cov)[0], boot, n, ci_level, wall_time_ms)
    # rounding noise on an exactly singular matrix must not count as definite
    tol = 1e-9 * max(float(np.trace(cov)), np.finfo(float).tiny)
    return CovarianceEstimate(cov, lam, bool(lam.lo > tol), tuple(labels))


def estimate_covariance(Fs: Sequence[Functional], window: Window, intensity: float,
                        n_reps: int, seed: SeedSpec, ci_level: float = 0.95,
                        n_boot: int = N_BOOTSTRAP, workers: int | None = None) -> CovarianceEstimate:
    """Sample covariance of several functionals on shared configurations.

    The smallest eigenvalue gets a percentile-bootstrap interval; the matrix
    is flagged positive definite when that interval excludes zero.
    """
    if len(Fs) < 2:
        raise EstimationError("need at least two functionals")
    _check_reps(n_reps)
    t0 = time.perf_counter()
    vals = _sample_values(Fs, window, intensity, n_reps, seed, workers)
    return covariance_from_samples(vals, seed, [F.label for F in Fs], ci_level, n_boot,
                                   1e3 * (time.perf_counter() - t0))


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    slope_se: float
    intercept: float
    intercept_se: float
    residuals: np.ndarray


def scaling_regression(pairs: Sequence[tuple[float, float]]) -> ScalingFit:
    """Least squares of ``log(value)`` on ``log(s)``."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 3:
        raise EstimationError("need at least three (s, value) pairs")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise EstimationError(f"scales and values must be positive: {arr.tolist()}")
    x, y = np.log(arr[:, 0]), np.log(arr[:, 1])
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = len(x) - 2
    sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(X.T @ X)
    return ScalingFit(float(coef[1]), math.sqrt(max(cov[1, 1], 0.0)),
                      float(coef[0]), math.sqrt(max(cov[0, 0], 0.0)), resid)


@dataclass(frozen=True)
class SandwichResult:
    variance: EstimateWithCI
    dirichlet: DirichletEstimate
    lower: EstimateWithCI
    upper: EstimateWithCI

    def holds(self, n_se: float = 3.0) -> bool:
        """``lower <= variance <= upper`` with ``n_se`` standard errors of slack on each."""
        v, lo, up = self.variance, self.lower, self.upper
        ok_low = lo.estimate - n_se * lo.std_error <= v.estimate + n_se * v.std_error
        ok_up = v.estimate - n_se * v.std_error <= up.estimate + n_se * up.std_error
        return bool(ok_low and ok_up)


def sandwich(F: Functional, window: Window, intensity: float, n_reps: int, seed: SeedSpec,
             ci_level: float = 0.95, n_boot: int = N_BOOTSTRAP,
             workers: int | None = None) -> SandwichResult:
    """Variance, lower and upper bound from one shared set of replications."""
    _check_reps(n_reps)
    t0 = time.perf_counter()
    vals = _four_point_samples(F, window, intensity, n_reps, seed, workers)
    ms = 1e3 * (time.perf_counter() - t0)
    de = _dirichlet_from(vals, intensity * window.volume(), ci_level, ms)
    var = variance_from_samples(vals[:, 0], seed, ci_level, n_boot, ms)
    return SandwichResult(var, de, theorem1_lower_bound_ci(de), de.first_order)
