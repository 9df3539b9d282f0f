"""Uniform cell grid shared by both kernel backends."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

_MIN_CELLS = 64


class Grid(NamedTuple):
    lo: np.ndarray  # (d,) lower corner of the bounding box
    width: float  # cell side length
    shape: np.ndarray  # (d,) cells per axis, int64
    strides: np.ndarray  # (d,) C-order strides, int64
    cell: np.ndarray  # (n,) flat cell id of each point
    order: np.ndarray  # (n,) point indices sorted by cell id
    start: np.ndarray  # (ncells + 1,) offsets into ``order``


def _shape_for(extent: np.ndarray, width: float) -> np.ndarray:
    return np.floor(extent / width).astype(np.int64) + 1


def build_grid(points: np.ndarray, width: float) -> Grid:
    """Bucket ``points`` into cubic cells of side at least ``width``.

    The side is enlarged (never shrunk) when the requested width would create
    more than ``max(4 n, 64)`` cells, so neighbour searches that rely on
    ``side >= width`` stay exact.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    n, d = points.shape
    if n == 0:
        lo = np.zeros(d)
        extent = np.zeros(d)
    else:
        lo = points.min(axis=0)
        extent = points.max(axis=0) - lo
    h = float(width)
    if not h > 0.0:
        h = max(float(extent.max(initial=0.0)), 1.0)
    cap = max(4 * n, _MIN_CELLS)
    shape = _shape_for(extent, h)
    while float(np.prod(shape.astype(np.float64))) > cap:
        h *= 2.0
        shape = _shape_for(extent, h)
    strides = np.ones(d, dtype=np.int64)
    for k in range(d - 2, -1, -1):
        strides[k] = strides[k + 1] * shape[k + 1]
    if n:
        coords = np.floor((points - lo) / h).astype(np.int64)
        np.clip(coords, 0, shape - 1, out=coords)
        cell = coords @ strides
    else:
        cell = np.zeros(0, dtype=np.int64)
    ncells = int(np.prod(shape))
    order = np.argsort(cell, kind="stable").astype(np.int64)
    counts = np.bincount(cell, minlength=ncells)
    start = np.zeros(ncells + 1, dtype=np.int64)
    np.cumsum(counts, out=start[1:])
    return Grid(lo, h, shape, strides, cell.astype(np.int64), order, start)


def neighbour_offsets(d: int, reach: int = 1) -> np.ndarray:
    """All integer offsets in ``[-reach, reach]^d`` as an ``(m, d)`` array."""
    axes = [np.arange(-reach, reach + 1, dtype=np.int64)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.ascontiguousarray(np.stack([m.ravel() for m in mesh], axis=1))


def knn_cell_width(points: np.ndarray, k: int) -> float:
    """Cell side giving roughly ``max(k, 2)`` points per occupied cell."""
    n = len(points)
    if n == 0:
        return 1.0
    extent = points.max(axis=0) - points.min(axis=0)
    positive = extent[extent > 0]
    if positive.size == 0:
        return 1.0
    vol = float(np.prod(positive))
    return (max(k, 2) * vol / n) ** (1.0 / positive.size)
