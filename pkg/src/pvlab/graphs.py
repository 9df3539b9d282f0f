"""Spatial random graphs: random geometric graphs and k-nearest-neighbour graphs.

Both builders return a :class:`GraphView`; the statistics (degree counts,
component counts, edge-length sums) are exposed as plain functions and as
:class:`~pvlab.malliavin.Functional` factories.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from pvlab import kernels
from pvlab.malliavin import Functional
from pvlab.process import InvalidParameterError, PointConfiguration

__all__ = [
    "GraphView",
    "KnnParams",
    "RggParams",
    "build_knn",
    "build_rgg",
    "component_count",
    "degree_count",
    "edge_length_functional",
    "knn_degree_count",
    "knn_degree_functional",
    "knn_edge_length_functional",
    "rgg_functional",
    "scaled_edge_length",
    "write_edge_list",
]


@dataclass(frozen=True)
class GraphView:
    """Undirected simple graph on ``n`` vertices given by sorted edge pairs."""

    n: int
    edges: np.ndarray  # (m, 2) int64, i < j, lexicographically sorted
    points: np.ndarray = field(repr=False, default=None)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    @cached_property
    def adjacency(self) -> list[np.ndarray]:
        both = np.concatenate([self.edges, self.edges[:, ::-1]])
        both = both[np.lexsort((both[:, 1], both[:, 0]))]
        cuts = np.searchsorted(both[:, 0], np.arange(self.n + 1))
        return [both[cuts[i]:cuts[i + 1], 1] for i in range(self.n)]

    @cached_property
    def component_labels(self) -> np.ndarray:
        """Label of each vertex: smallest vertex index in its component."""
        return kernels.component_labels(self.n, self.edges)

    @cached_property
    def component_sizes(self) -> np.ndarray:
        """Size of the component containing each vertex."""
        counts = np.bincount(self.component_labels, minlength=self.n)
        return counts[self.component_labels]

    def degree_histogram(self, max_degree: int | None = None) -> np.ndarray:
        hist = np.bincount(self.degrees, minlength=1 if max_degree is None else max_degree + 1)
        if max_degree is not None:
            hist = hist[: max_degree + 1]
        return hist


@dataclass(frozen=True)
class RggParams:
    """Thermodynamic scaling ``r_s = rho * s**(-1/d)``."""

    rho: float
    dim: int
    intensity: float

    def __post_init__(self):
        if not (self.rho > 0 and self.intensity > 0 and self.dim >= 1):
            raise InvalidParameterError(f"invalid RGG parameters {self}")

    @property
    def radius(self) -> float:
        return self.rho * self.intensity ** (-1.0 / self.dim)


def _points(config) -> np.ndarray:
    return config.points if isinstance(config, PointConfiguration) else np.asarray(config, dtype=np.float64)


def build_rgg(config: PointConfiguration, params: RggParams | float) -> GraphView:
    """Random geometric graph: distinct vertices joined when ``|u - v| <= r``.

    ``params`` may be an :class:`RggParams` or a bare radius.
    """
    r = params.radius if isinstance(params, RggParams) else float(params)
    pts = _points(config)
    return GraphView(len(pts), kernels.radius_pairs(pts, r), pts)


def degree_count(graph: GraphView, j: int) -> int:
    if j < 0:
        raise InvalidParameterError("degree must be non-negative")
    return int(np.count_nonzero(graph.degrees == j))


def component_count(graph: GraphView, j: int) -> int:
    """Number of connected components with exactly ``j`` vertices."""
    if j < 1:
        raise InvalidParameterError("component size must be >= 1")
    return int(np.count_nonzero(graph.component_sizes == j)) // j


def rgg_functional(stat: str, j: int, params: RggParams) -> Functional:
    """``V_j`` (``stat="degree"``) or ``C_j`` (``stat="component"``) of the RGG."""
    label = f"rgg_{stat}[j={j},rho={params.rho:g},s={params.intensity:g},d={params.dim}]"
    if stat == "degree":
        return Functional(lambda c: degree_count(build_rgg(c, params), j), label)
    if stat == "component":
        return Functional(lambda c: component_count(build_rgg(c, params), j), label)
    raise InvalidParameterError(f"unknown RGG statistic {stat!r}")


@dataclass(frozen=True)
class KnnParams:
    k: int
    q_exponents: tuple[float, ...] = (1.0,)
    dim: int = 2
    intensity: float = 1.0

    def __post_init__(self):
        if self.k < 1 or any(q < 0 for q in self.q_exponents):
            raise InvalidParameterError(f"invalid kNN parameters {self}")


def build_knn(config: PointConfiguration, k: int) -> GraphView:
    """Undirected kNN graph: ``{u, v}`` is an edge if either is among the other's k nearest.

    Distance ties are broken by the smaller point index. With ``n <= k``
    points every vertex is joined to all others.
    """
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    pts = _points(config)
    n = len(pts)
    table = kernels.knn_table(pts, k)
    if table.size == 0:
        return GraphView(n, np.zeros((0, 2), dtype=np.int64), pts)
    src = np.repeat(np.arange(n, dtype=np.int64), table.shape[1])
    dst = table.ravel()
    lo, hi = np.minimum(src, dst), np.maximum(src, dst)
    edges = np.unique(np.stack([lo, hi], axis=1), axis=0)
    return GraphView(n, edges, pts)


def _edge_lengths(graph: GraphView) -> np.ndarray:
    diff = graph.points[graph.edges[:, 0]] - graph.points[graph.edges[:, 1]]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def edge_length_functional(config: PointConfiguration, k: int, q: float) -> float:
    """``L_q``: sum of ``|e|**q`` over undirected kNN edges (``q = 0`` counts edges)."""
    if q < 0:
        raise InvalidParameterError("q must be non-negative")
    g = build_knn(config, k)
    if q == 0:
        return float(len(g.edges))
    return float(np.sum(_edge_lengths(g) ** q))


def scaled_edge_length(config: PointConfiguration, k: int, q: float, s: float) -> float:
    """``F_q = s**(q/d) * L_q``."""
    d = config.dim if isinstance(config, PointConfiguration) else np.shape(config)[1]
    return s ** (q / d) * edge_length_functional(config, k, q)


def knn_degree_count(config: PointConfiguration, k: int, j: int, k_max: int | None = None) -> int:
    """Number of vertices of degree ``j`` in the kNN graph.

    ``k_max`` only clamps: degrees above it are reported as 0 for ``j > k_max``.
    """
    if j < 0:
        raise InvalidParameterError("degree must be non-negative")
    if k_max is not None and j > k_max:
        return 0
    return int(np.count_nonzero(build_knn(config, k).degrees == j))


def knn_edge_length_functional(k: int, q: float, s: float, dim: int = 2) -> Functional:
    scale = s ** (q / dim)
    return Functional(lambda c: scale * edge_length_functional(c, k, q),
                      f"knn_F[k={k},q={q:g},s={s:g},d={dim}]")


def knn_degree_functional(k: int, j: int) -> Functional:
    return Functional(lambda c: knn_degree_count(c, k, j), f"knn_V[k={k},j={j}]")


def write_edge_list(graph: GraphView, path: str | os.PathLike) -> None:
    """Debug dump: CSV ``u,v`` of vertex indices into the point CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "v"])
        w.writerows(graph.edges.tolist())
