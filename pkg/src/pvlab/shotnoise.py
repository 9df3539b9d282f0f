"""Poisson shot-noise fields and the volume of their excursion sets.

The field is ``f(x) = sum_{y in eta} g(x - y)`` for a stationary unit-intensity
Poisson process ``eta``. The excursion functional is
``F_s = vol{x in B(0, s) : f(x) >= u}``, estimated by quasi-Monte Carlo
quadrature on a fixed Halton node set. Points are sampled in the enlarged ball
``B(0, s + R_cut)`` and the kernel is truncated at ``R_cut``; for kernels with
compact support ``R_cut`` is the support radius and nothing is lost.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.stats import qmc

from pvlab import kernels
from pvlab.malliavin import EstimateWithCI, EstimationError, Functional
from pvlab.process import (Ball, InvalidParameterError, PointConfiguration, SeedSpec, ball_volume,
                           map_replications, sample_poisson)

__all__ = [
    "CallableKernel",
    "ExcursionSpec",
    "IndicatorKernel",
    "KernelReport",
    "PowerLawKernel",
    "ShotNoiseFunctional",
    "ball_nodes",
    "excursion_volume",
    "field_value",
    "field_values",
    "kernel_from_json",
    "kernel_to_json",
    "pair_density_integral",
    "pair_probability_variance_density",
    "shotnoise_functional",
    "truncation_radius",
    "validate_kernel",
]


def _norms(disp: np.ndarray) -> np.ndarray:
    disp = np.asarray(disp, dtype=np.float64)
    return np.sqrt(np.einsum("...i,...i->...", disp, disp))


@dataclass(frozen=True)
class IndicatorKernel:
    """``g = amplitude * 1_{B(0, radius)}`` (compact support)."""

    amplitude: float = 1.0
    radius: float = 1.0
    dim: int = 2
    kind = "compact-support"

    def __post_init__(self):
        if not (self.amplitude > 0 and self.radius > 0 and self.dim >= 1):
            raise InvalidParameterError(f"invalid indicator kernel {self}")

    @property
    def support_radius(self) -> float:
        return self.radius

    def __call__(self, disp) -> np.ndarray:
        return np.where(_norms(disp) <= self.radius, self.amplitude, 0.0)

    def params(self) -> dict:
        return {"amplitude": self.amplitude, "radius": self.radius}


@dataclass(frozen=True)
class PowerLawKernel:
    """``g(x) = amplitude * min(1, (|x| / core) ** -delta)``.

    The declared tail bounds are ``c_lo = c_hi = amplitude * core**delta`` for
    ``|x| >= c_g = max(core, 1)``; ``gamma`` defaults to ``delta`` and may be
    declared larger (the lower bound then still holds for ``|x| >= 1``).
    """

    amplitude: float = 1.0
    core: float = 1.0
    delta: float = 7.0
    gamma: float | None = None
    dim: int = 2
    kind = "power-law"

    def __post_init__(self):
        if self.gamma is None:
            object.__setattr__(self, "gamma", self.delta)
        if not (self.amplitude > 0 and self.core > 0 and self.delta > 0 and self.dim >= 1):
            raise InvalidParameterError(f"invalid power-law kernel {self}")

    @property
    def support_radius(self) -> float:
        return math.inf

    @property
    def c_hi(self) -> float:
        return self.amplitude * self.core**self.delta

    @property
    def c_lo(self) -> float:
        return self.c_hi

    @property
    def c_g(self) -> float:
        return max(self.core, 1.0)

    def __call__(self, disp) -> np.ndarray:
        r = _norms(disp)
        with np.errstate(divide="ignore", over="ignore"):
            return self.amplitude * np.minimum(1.0, (self.core / np.maximum(r, 1e-300)) ** self.delta)

    def params(self) -> dict:
        return {"amplitude": self.amplitude, "core": self.core, "delta": self.delta, "gamma": self.gamma}


@dataclass(frozen=True)
class CallableKernel:
    """User kernel ``func(disp) -> values`` acting on displacement arrays ``(..., d)``.

    Exactly one of ``support_radius`` or ``tail = (c_lo, c_hi, delta, gamma, c_g)``
    must be declared; undeclared tails are rejected.
    """

    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    dim: int = 2
    support_radius: float = math.inf
    tail: tuple[float, float, float, float, float] | None = None

    def __post_init__(self):
        has_support = math.isfinite(self.support_radius)
        if has_support == (self.tail is not None):
            raise InvalidParameterError("declare either a finite support_radius or tail bounds, not both or neither")
        if has_support and self.support_radius <= 0:
            raise InvalidParameterError("support_radius must be positive")

    @property
    def kind(self) -> str:
        return "compact-support" if math.isfinite(self.support_radius) else "power-law"

    @property
    def c_lo(self) -> float:
        return self.tail[0]

    @property
    def c_hi(self) -> float:
        return self.tail[1]

    @property
    def delta(self) -> float:
        return self.tail[2]

    @property
    def gamma(self) -> float:
        return self.tail[3]

    @property
    def c_g(self) -> float:
        return self.tail[4]

    def __call__(self, disp) -> np.ndarray:
        disp = np.asarray(disp, dtype=np.float64)
        vals = np.asarray(self.func(disp), dtype=np.float64)
        if math.isfinite(self.support_radius):
            vals = np.where(_norms(disp) <= self.support_radius, vals, 0.0)
        return vals


Kernel = IndicatorKernel | PowerLawKernel | CallableKernel


def kernel_to_json(kernel: Kernel) -> str:
    if isinstance(kernel, CallableKernel):
        raise InvalidParameterError("callable kernels cannot be serialised")
    return json.dumps({"kind": kernel.kind, "d": kernel.dim, **kernel.params()})


def kernel_from_json(text: str | dict) -> Kernel:
    doc = dict(json.loads(text) if isinstance(text, str) else text)
    kind = doc.pop("kind", None)
    d = int(doc.pop("d", 2))
    try:
        if kind == "compact-support":
            return IndicatorKernel(dim=d, **doc)
        if kind == "power-law":
            return PowerLawKernel(dim=d, **doc)
    except TypeError as exc:
        raise InvalidParameterError(f"bad kernel parameters: {exc}") from None
    raise InvalidParameterError(f"unknown kernel kind {kind!r}")


@dataclass(frozen=True)
class KernelReport:
    admissible: bool
    regime: str  # "power-law", "compact-support" or "inadmissible"
    messages: tuple[str, ...] = ()


def validate_kernel(kernel: Kernel, n_radii: int = 64, n_dirs: int = 8) -> KernelReport:
    """Check the tail-exponent chain ``delta + d/2 > gamma >= delta > 3d`` and
    sample ``|g|`` on a log-radius grid beyond ``c_g`` against the declared bounds."""
    d = kernel.dim
    msgs = []
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(n_dirs, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    if float(np.asarray(kernel(np.zeros(d)))) <= 0:
        msgs.append("g(0) must be positive")
    if kernel.kind == "compact-support":
        R = kernel.support_radius
        outside = kernel((dirs[:, None, :] * (R * np.geomspace(1.0001, 100, n_radii))[None, :, None]))
        if np.any(outside != 0):
            msgs.append("kernel does not vanish beyond its declared support radius")
        ok = not msgs
        return KernelReport(ok, "compact-support" if ok else "inadmissible", tuple(msgs))
    delta, gamma = kernel.delta, kernel.gamma
    if not delta > 3 * d:
        msgs.append(f"delta = {delta:g} must exceed 3d = {3 * d}")
    if not gamma >= delta:
        msgs.append(f"gamma = {gamma:g} must be >= delta = {delta:g}")
    if not delta + d / 2 > gamma:
        msgs.append(f"gamma = {gamma:g} must be < delta + d/2 = {delta + d / 2:g}")
    r = kernel.c_g * np.geomspace(1.0, 1e3, n_radii)
    vals = np.abs(kernel(dirs[:, None, :] * r[None, :, None]))
    lo = kernel.c_lo * r ** (-gamma)
    hi = kernel.c_hi * r ** (-delta)
    if np.any(vals < lo * (1 - 1e-12)) or np.any(vals > hi * (1 + 1e-12)):
        msgs.append("sampled |g| violates the declared two-sided power bounds")
    ok = not msgs
    return KernelReport(ok, "power-law" if ok else "inadmissible", tuple(msgs))


def truncation_radius(kernel: Kernel, c3: float, eps: float = 0.0, target: float = 1e-3) -> float:
    """Smallest ``R >= c_g + eps`` whose far-field exceedance bound
    ``c_hi d kappa_d / (c3 (delta - d) (R - eps)**(delta - d))`` is at most ``target``.

    Compact kernels return their support radius.
    """
    if kernel.kind == "compact-support":
        return float(kernel.support_radius)
    d = kernel.dim
    if not kernel.delta > d:
        raise InvalidParameterError(f"truncation needs delta > d, got delta={kernel.delta:g}, d={d}")
    if not (c3 > 0 and target > 0 and eps >= 0):
        raise InvalidParameterError("need c3 > 0, target > 0 and eps >= 0")
    k = kernel.delta - d
    base = (kernel.c_hi * d * ball_volume(d) / (c3 * k * target)) ** (1.0 / k)
    return max(kernel.c_g + eps, eps + base)


@dataclass(frozen=True)
class ExcursionSpec:
    """Level ``u``, observation radius ``s``, node count ``n_nodes`` and kernel cut-off ``r_cut``."""

    level: float
    radius: float
    n_nodes: int = 4096
    r_cut: float = 1.0

    def __post_init__(self):
        if not self.level > 0:
            raise InvalidParameterError("level u must be positive")
        if not self.radius >= 1:
            raise InvalidParameterError("observation radius s must be >= 1")
        if self.n_nodes < 1:
            raise InvalidParameterError("need at least one quadrature node")
        if not self.r_cut >= 0:
            raise InvalidParameterError("r_cut must be non-negative")

    def window(self, dim: int) -> Ball:
        """Sampling window ``B(0, s + r_cut)``."""
        return Ball.centered(dim, self.radius + self.r_cut)


@lru_cache(maxsize=32)
def _unit_ball_nodes(d: int, n: int) -> np.ndarray:
    # unscrambled Halton in [-1, 1]^d, keep the first n inside the ball
    eng = qmc.Halton(d, scramble=False)
    out = np.empty((0, d))
    while len(out) < n:
        cand = 2.0 * eng.random(max(2 * n, 64)) - 1.0
        out = np.vstack([out, cand[np.einsum("ij,ij->i", cand, cand) <= 1.0]])
    out = out[:n]
    out.setflags(write=False)
    return out


def ball_nodes(d: int, s: float, n: int) -> np.ndarray:
    """``n`` low-discrepancy nodes in ``B(0, s)`` (deterministic)."""
    return s * _unit_ball_nodes(d, n)


def field_value(kernel: Kernel, config: PointConfiguration, x) -> float:
    """Exact ``f(x) = sum_y g(x - y)`` over all configuration points."""
    pts = config.points
    if len(pts) == 0:
        return 0.0
    return float(np.sum(kernel(np.asarray(x, dtype=np.float64)[None, :] - pts)))


def field_values(kernel: Kernel, points: np.ndarray, nodes: np.ndarray, reach: float) -> np.ndarray:
    """Field at ``nodes`` with the kernel truncated at ``reach``."""
    if isinstance(kernel, IndicatorKernel):
        return kernels.shot_field(nodes, points, 0, min(reach, kernel.radius), kernel.amplitude)
    if isinstance(kernel, PowerLawKernel):
        return kernels.shot_field(nodes, points, 1, reach, kernel.amplitude, kernel.core, kernel.delta)
    out = np.zeros(len(nodes))
    if len(points) == 0:
        return out
    for a in range(0, len(nodes), 1024):
        disp = nodes[a:a + 1024, None, :] - points[None, :, :]
        vals = kernel(disp)
        out[a:a + 1024] = np.where(_norms(disp) <= reach, vals, 0.0).sum(axis=1)
    return out


def excursion_volume(kernel: Kernel, config: PointConfiguration, spec: ExcursionSpec,
                     nodes: np.ndarray | None = None) -> float:
    """Quadrature estimate of ``vol{x in B(0, s): f(x) >= u}``."""
    d = kernel.dim
    if nodes is None:
        nodes = ball_nodes(d, spec.radius, spec.n_nodes)
    if len(config) == 0:
        return 0.0
    f = field_values(kernel, config.points, nodes, spec.r_cut)
    return ball_volume(d, spec.radius) * float(np.count_nonzero(f >= spec.level)) / len(nodes)


class ShotNoiseFunctional(Functional):
    """``F_s`` as a functional of a configuration on ``B(0, s + r_cut)``.

    The node set is fixed at construction, so the four evaluations behind a
    second-order difference share it.
    """

    def __init__(self, kernel: Kernel, spec: ExcursionSpec):
        self.kernel = kernel
        self.spec = spec
        self.nodes = ball_nodes(kernel.dim, spec.radius, spec.n_nodes)
        self.window = spec.window(kernel.dim)
        self.intensity = 1.0
        super().__init__(lambda c: excursion_volume(kernel, c, spec, self.nodes),
                         f"shotnoise[{kernel.kind},u={spec.level:g},s={spec.radius:g},d={kernel.dim}]")


def shotnoise_functional(kernel: Kernel, spec: ExcursionSpec) -> ShotNoiseFunctional:
    return ShotNoiseFunctional(kernel, spec)


def pair_probability_variance_density(kernel: Kernel, u: float, z, n_reps: int, seed: SeedSpec,
                                      r_cut: float | None = None, ci_level: float = 0.95,
                                      workers: int | None = None) -> EstimateWithCI:
    """Monte Carlo estimate of ``P(f(0) >= u, f(z) >= u) - P(f(0) >= u) P(f(z) >= u)``.

    Both exceedances are read off the same field realisation. The estimate is
    the unbiased sample covariance of the two indicators; its standard error
    uses the product of centred indicators.
    """
    if n_reps < 2:
        raise EstimationError("need at least two replications")
    d = kernel.dim
    z = np.asarray(z, dtype=np.float64).reshape(d)
    if r_cut is None:
        r_cut = kernel.support_radius if kernel.kind == "compact-support" else truncation_radius(kernel, 0.1 * u)
    nodes = np.vstack([np.zeros(d), z])
    half = float(np.linalg.norm(z)) / 2
    window = Ball(z / 2, half + r_cut)
    t0 = time.perf_counter()

    def one(r):
        cfg = sample_poisson(window, 1.0, seed.replication(r))
        return field_values(kernel, cfg.points, nodes, r_cut) >= u

    hits = np.array(map_replications(one, n_reps, workers), dtype=np.float64)
    a, b = hits[:, 0], hits[:, 1]
    n = len(a)
    cov = float(np.sum((a - a.mean()) * (b - b.mean())) / (n - 1))
    infl = (a - a.mean()) * (b - b.mean())
    se = float(infl.std(ddof=1) / math.sqrt(n))
    return EstimateWithCI.normal(cov, se, n, ci_level, (time.perf_counter() - t0) * 1e3)


def pair_density_integral(kernel: Kernel, u: float, r_max: float, n_radii: int, n_reps: int,
                          seed: SeedSpec, workers: int | None = None) -> EstimateWithCI:
    """Radial trapezoid rule for ``int C(z) dz`` over ``|z| <= r_max``.

    Assumes a radially symmetric kernel. Lags are independent streams, so the
    standard errors combine in quadrature.
    """
    d = kernel.dim
    radii = np.linspace(0.0, r_max, n_radii)
    w = np.full(n_radii, radii[1] - radii[0])
    w[0] = w[-1] = w[0] / 2
    shell = d * ball_volume(d) * radii ** (d - 1)
    total, var = 0.0, 0.0
    for i, r in enumerate(radii):
        z = np.zeros(d)
        z[0] = r
        est = pair_probability_variance_density(kernel, u, z, n_reps, seed.for_experiment(seed.experiment + i + 1),
                                                workers=workers)
        total += w[i] * shell[i] * est.estimate
        var += (w[i] * shell[i] * est.std_error) ** 2
    return EstimateWithCI.normal(total, math.sqrt(var), n_reps * n_radii)
