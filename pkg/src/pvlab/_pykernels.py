"""Pure Python/numpy versions of the spatial kernels.

Used when the compiled extension is unavailable or ``PVLAB_PURE_PYTHON`` is
set. Algorithms mirror ``_ckernels.pyx`` (same grid, same tie-breaking) so the
two backends return identical results up to floating-point summation order.
"""
from __future__ import annotations

import numpy as np

from pvlab._grid import build_grid, knn_cell_width, neighbour_offsets

_CHUNK = 4096


def _cell_members(grid, flat: int) -> np.ndarray:
    return grid.order[grid.start[flat]:grid.start[flat + 1]]


def _home(grid, flat: int) -> np.ndarray:
    return (flat // grid.strides) % grid.shape


def radius_pairs(points, r: float) -> np.ndarray:
    pts = np.ascontiguousarray(points, dtype=np.float64)
    n, d = pts.shape
    if n < 2 or r < 0:
        return np.zeros((0, 2), dtype=np.int64)
    grid = build_grid(pts, r)
    offs = neighbour_offsets(d, 1)
    r2 = r * r
    chunks = []
    for flat in np.unique(grid.cell):
        mine = _cell_members(grid, flat)
        home = _home(grid, flat)
        for off in offs:
            c = home + off
            if np.any(c < 0) or np.any(c >= grid.shape):
                continue
            nb = int(c @ grid.strides)
            if nb < flat:
                continue
            other = _cell_members(grid, nb)
            diff = pts[mine][:, None, :] - pts[other][None, :, :]
            close = (diff * diff).sum(axis=2) <= r2
            a, b = np.nonzero(close)
            i, j = mine[a], other[b]
            keep = i != j
            if nb == flat:
                keep &= i < j
            i, j = i[keep], j[keep]
            chunks.append(np.stack([np.minimum(i, j), np.maximum(i, j)], axis=1))
    if not chunks:
        return np.zeros((0, 2), dtype=np.int64)
    res = np.concatenate(chunks).astype(np.int64)
    return res[np.lexsort((res[:, 1], res[:, 0]))]


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        a, b = self.find(a), self.find(b)
        if a == b:
            return
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]


def component_labels(n: int, pairs) -> np.ndarray:
    uf = _UnionFind(n)
    for a, b in np.asarray(pairs, dtype=np.int64).reshape(-1, 2):
        uf.union(int(a), int(b))
    first: dict[int, int] = {}
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        root = uf.find(i)
        labels[i] = first.setdefault(root, i)
    return labels


def _ring_cells(home: np.ndarray, shape: np.ndarray, L: int):
    lo = np.maximum(home - L, 0)
    hi = np.minimum(home + L, shape - 1)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    cheb = np.abs(mesh - home).max(axis=1)
    return mesh[cheb == L]


def knn_table(points, k: int) -> np.ndarray:
    pts = np.ascontiguousarray(points, dtype=np.float64)
    n, d = pts.shape
    kk = min(k, n - 1) if n else 0
    if kk <= 0:
        return np.empty((n, 0), dtype=np.int64)
    grid = build_grid(pts, knn_cell_width(pts, kk))
    table = np.empty((n, kk), dtype=np.int64)
    for i in range(n):
        home = _home(grid, int(grid.cell[i]))
        lmax = int(max((home).max(), (grid.shape - 1 - home).max()))
        cand_d = np.empty(0)
        cand_j = np.empty(0, dtype=np.int64)
        L = 0
        while True:
            cells = _ring_cells(home, grid.shape, L)
            if len(cells):
                members = [_cell_members(grid, int(c @ grid.strides)) for c in cells]
                js = np.concatenate(members)
                js = js[js != i]
                diff = pts[js] - pts[i]
                d2 = (diff * diff).sum(axis=1)
                cand_d = np.concatenate([cand_d, d2])
                cand_j = np.concatenate([cand_j, js])
                sel = np.lexsort((cand_j, cand_d))[:kk]
                cand_d, cand_j = cand_d[sel], cand_j[sel]
            bound = L * grid.width
            if len(cand_j) == kk and cand_d[-1] < bound * bound:
                break
            if L >= lmax:
                break
            L += 1
        table[i] = cand_j
    return table


def hull2d(points) -> np.ndarray:
    p = np.ascontiguousarray(points, dtype=np.float64)
    n = len(p)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((p[:, 1], p[:, 0]))

    def cross(a, b, c):
        return (p[b, 0] - p[a, 0]) * (p[c, 1] - p[a, 1]) - (p[b, 1] - p[a, 1]) * (p[c, 0] - p[a, 0])

    hull: list[int] = []
    for c in order:
        while len(hull) >= 2 and cross(hull[-2], hull[-1], c) <= 0:
            hull.pop()
        hull.append(int(c))
    lower_size = len(hull) + 1
    for c in order[-2::-1]:
        while len(hull) >= lower_size and cross(hull[-2], hull[-1], c) <= 0:
            hull.pop()
        hull.append(int(c))
    if len(hull) > 1:
        hull.pop()
    if len(hull) == 2 and hull[0] == hull[1]:
        hull = hull[:1]
    return np.asarray(hull, dtype=np.int64)


def shot_field(nodes, points, kind: int, reach: float, amplitude: float,
               core: float = 1.0, exponent: float = 0.0) -> np.ndarray:
    q = np.ascontiguousarray(nodes, dtype=np.float64)
    pts = np.ascontiguousarray(points, dtype=np.float64)
    out = np.zeros(len(q))
    if len(pts) == 0 or len(q) == 0:
        return out
    reach2 = reach * reach
    core2 = core * core
    step = max(1, _CHUNK * 64 // max(len(pts), 1))
    for a in range(0, len(q), step):
        diff = q[a:a + step, None, :] - pts[None, :, :]
        d2 = (diff * diff).sum(axis=2)
        inside = d2 <= reach2
        if kind == 0:
            vals = np.where(inside, amplitude, 0.0)
        else:
            with np.errstate(divide="ignore"):
                ratio = np.where(d2 <= core2, 1.0, core2 / np.maximum(d2, core2))
            vals = np.where(inside, amplitude * ratio ** (0.5 * exponent), 0.0)
        out[a:a + step] = vals.sum(axis=1)
    return out
