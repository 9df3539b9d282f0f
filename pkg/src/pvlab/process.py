"""Point configurations, sampling windows and Poisson sampling.

Randomness is keyed, never global: every draw goes through a
:class:`SeedSpec`, which maps ``(master_seed, (experiment, replication))`` to
an independent Philox stream via :class:`numpy.random.SeedSequence`.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

__all__ = [
    "Ball",
    "Box",
    "InvalidParameterError",
    "PointConfiguration",
    "SeedSpec",
    "Window",
    "add_points",
    "ball_volume",
    "map_replications",
    "read_points_csv",
    "sample_poisson",
    "write_points_csv",
]

T = TypeVar("T")

# Replication index reserved for resampling streams (bootstrap etc.).
_AUX_STREAM = 2**40


class InvalidParameterError(ValueError):
    """Raised for out-of-domain numeric parameters."""


class DimensionMismatchError(ValueError):
    pass


def ball_volume(d: int, r: float = 1.0) -> float:
    """Volume ``kappa_d * r**d`` of the d-dimensional ball of radius ``r``."""
    if d < 1:
        raise InvalidParameterError(f"dimension must be >= 1, got {d}")
    if not r >= 0:
        raise InvalidParameterError(f"radius must be non-negative, got {r}")
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r**d


@dataclass(frozen=True, eq=False)
class PointConfiguration:
    """Finite counting measure on R^d, stored as an ``(n, d)`` array.

    Points keep insertion order and duplicates are allowed (multiset
    semantics). Instances are immutable; ``add``/``remove_last`` return new
    configurations.
    """

    points: np.ndarray
    dim: int = field(default=-1)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        dim = self.dim
        if pts.ndim == 1 and pts.size == 0:
            if dim < 1:
                raise DimensionMismatchError("empty configuration needs an explicit dim")
            pts = pts.reshape(0, dim)
        if pts.ndim != 2:
            raise DimensionMismatchError(f"points must be an (n, d) array, got shape {pts.shape}")
        if dim == -1:
            dim = pts.shape[1]
        if pts.shape[1] != dim or dim < 1:
            raise DimensionMismatchError(f"points have dimension {pts.shape[1]}, expected {dim}")
        if pts.flags.writeable or not pts.flags.c_contiguous:
            pts = np.array(pts, dtype=np.float64, order="C")
            pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "dim", dim)

    @classmethod
    def _owned(cls, arr: np.ndarray, dim: int) -> "PointConfiguration":
        # caller hands over a fresh C-contiguous float64 array
        arr.flags.writeable = False
        return cls(arr, dim)

    @classmethod
    def empty(cls, dim: int) -> "PointConfiguration":
        return cls(np.zeros((0, dim)), dim)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self):
        return iter(self.points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointConfiguration):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.points, other.points)

    def __repr__(self) -> str:
        return f"PointConfiguration(n={len(self)}, dim={self.dim})"

    def add(self, *extra) -> "PointConfiguration":
        return add_points(self, extra)

    def remove_last(self, count: int = 1) -> "PointConfiguration":
        if count > len(self):
            raise InvalidParameterError("cannot remove more points than present")
        return PointConfiguration(self.points[: len(self) - count], self.dim)


def add_points(config: PointConfiguration, extra: Iterable) -> PointConfiguration:
    """Return ``config`` plus the ``extra`` points; the input is not mutated."""
    ext = np.asarray(list(extra) if not isinstance(extra, np.ndarray) else extra, dtype=np.float64)
    if ext.size == 0:
        return config
    ext = ext.reshape(-1, ext.shape[-1]) if ext.ndim > 1 else ext.reshape(1, -1)
    if ext.shape[1] != config.dim:
        raise DimensionMismatchError(
            f"cannot add {ext.shape[1]}-dimensional points to a {config.dim}-dimensional configuration"
        )
    return PointConfiguration._owned(np.concatenate([config.points, ext]), config.dim)


class Window:
    """Sampling region with a dimension, a volume and a containment test."""

    dim: int

    def volume(self) -> float:
        raise NotImplementedError

    def contains(self, x) -> np.ndarray | bool:
        raise NotImplementedError

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError


@dataclass(frozen=True)
class Box(Window):
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise InvalidParameterError("box corners must have equal, positive length")
        if not all(math.isfinite(a) and math.isfinite(b) and b > a for a, b in zip(lo, hi)):
            raise InvalidParameterError(f"degenerate box {lo} - {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, d: int) -> "Box":
        return cls((0.0,) * d, (1.0,) * d)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def sample_uniform(self, rng, n):
        lo = np.asarray(self.lower)
        return lo + rng.random((n, self.dim)) * (np.asarray(self.upper) - lo)

    def bounding_box(self):
        return np.asarray(self.lower), np.asarray(self.upper)


@dataclass(frozen=True)
class Ball(Window):
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in self.center)
        if not c:
            raise InvalidParameterError("ball centre must have positive length")
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise InvalidParameterError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def centered(cls, d: int, radius: float = 1.0) -> "Ball":
        return cls((0.0,) * d, radius)

    @property
    def dim(self) -> int:
        return len(self.center)

    def volume(self) -> float:
        return ball_volume(self.dim, self.radius)

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64)
        diff = x - np.asarray(self.center)
        return np.einsum("...i,...i->...", diff, diff) <= self.radius**2

    def sample_uniform(self, rng, n):
        # rejection from the bounding box: exact and simple
        c = np.asarray(self.center)
        out = np.empty((n, self.dim))
        filled = 0
        accept = ball_volume(self.dim) / 2.0**self.dim
        while filled < n:
            m = int((n - filled) / accept * 1.1) + 8
            cand = rng.uniform(-1.0, 1.0, size=(m, self.dim))
            cand = cand[np.einsum("ij,ij->i", cand, cand) <= 1.0]
            take = min(len(cand), n - filled)
            out[filled:filled + take] = cand[:take]
            filled += take
        return c + self.radius * out

    def bounding_box(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class SeedSpec:
    """Key of one reproducible random stream.

    Distinct ``(master_seed, stream_id)`` pairs give independent streams;
    ``stream_id`` is ``(experiment, replication)``.
    """

    master_seed: int
    stream_id: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise InvalidParameterError("master_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "stream_id", tuple(int(v) for v in self.stream_id))

    @property
    def experiment(self) -> int:
        return self.stream_id[0]

    def replication(self, r: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, (self.experiment, int(r)))

    def for_experiment(self, e: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, (int(e), self.stream_id[1]))

    def rng(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.stream_id)
        return np.random.Generator(np.random.Philox(seq))

    def aux_rng(self, tag: int = 0) -> np.random.Generator:
        """Stream reserved for resampling, disjoint from all replication streams."""
        return self.replication(_AUX_STREAM + tag).rng()

    def __str__(self) -> str:
        return f"seed={self.master_seed}/stream={self.stream_id}"


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, SeedSpec):
        return seed.rng()
    raise TypeError(f"expected SeedSpec or numpy Generator, got {type(seed).__name__}")


def sample_poisson(window: Window, intensity: float, seed) -> PointConfiguration:
    """Homogeneous Poisson process of the given intensity on ``window``.

    ``seed`` is a :class:`SeedSpec` (deterministic) or an existing
    ``numpy.random.Generator`` (draws continue that stream).
    """
    if not math.isfinite(intensity) or intensity <= 0:
        raise InvalidParameterError(f"intensity must be finite and positive, got {intensity}")
    rng = _as_rng(seed)
    n = int(rng.poisson(intensity * window.volume()))
    return PointConfiguration._owned(np.ascontiguousarray(window.sample_uniform(rng, n)), window.dim)


def default_workers() -> int:
    env = os.environ.get("PVLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidParameterError(f"PVLAB_THREADS must be an integer, got {env!r}") from None
    return 1


def map_replications(fn: Callable[[int], T], n_reps: int, workers: int | None = None,
                     chunk: int = 256) -> list[T]:
    """Evaluate ``fn(r)`` for ``r in range(n_reps)``; results are ordered by ``r``.

    With ``workers > 1`` chunks run on a thread pool (the compiled kernels
    release the GIL). Output order never depends on completion order.
    """
    workers = default_workers() if workers is None else workers
    if workers <= 1 or n_reps <= chunk:
        return [fn(r) for r in range(n_reps)]
    bounds = [(a, min(a + chunk, n_reps)) for a in range(0, n_reps, chunk)]
    out: list = [None] * n_reps

    def run(span):
        a, b = span
        out[a:b] = [fn(r) for r in range(a, b)]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for fut in [pool.submit(run, s) for s in bounds]:
            fut.result()
    return out


def write_points_csv(config: PointConfiguration, path: str | os.PathLike) -> None:
    """One row per point, header ``x1,...,xd``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{k + 1}" for k in range(config.dim)])
        for p in config.points:
            w.writerow([repr(float(v)) for v in p])


def read_points_csv(path: str | os.PathLike) -> PointConfiguration:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file, expected a header row")
    header = rows[0]
    expected = [f"x{k + 1}" for k in range(len(header))]
    if header != expected:
        raise ValueError(f"{Path(path).name}: header {header} should be {expected}")
    d = len(header)
    pts = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != d:
            raise ValueError(f"{path}:{lineno}: expected {d} columns, got {len(row)}")
        pts.append([float(v) for v in row])
    return PointConfiguration(np.asarray(pts, dtype=np.float64).reshape(-1, d), d)

