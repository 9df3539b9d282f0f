# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled spatial kernels. Same signatures and results as ``_pykernels``."""
import numpy as np

from libc.math cimport floor, pow, sqrt
from libcpp.vector cimport vector

from pvlab._grid import build_grid, knn_cell_width, neighbour_offsets

DEF MAXDIM = 8


cdef inline double _dist2(const double[:, ::1] a, Py_ssize_t i,
                          const double[:, ::1] b, Py_ssize_t j, int d) noexcept nogil:
    cdef double s = 0.0, t
    cdef int k
    for k in range(d):
        t = a[i, k] - b[j, k]
        s += t * t
    return s


cdef inline double _ratio_pow(double x, double half, int ip, int mode) noexcept nogil:
    # x ** half; mode 1: half integer, mode 2: half = ip + 1/2, mode 0: generic
    cdef double r = 1.0
    cdef int k
    if mode == 0:
        return pow(x, half)
    for k in range(ip):
        r *= x
    if mode == 2:
        r *= sqrt(x)
    return r


def _check_dim(int d):
    if d > MAXDIM:
        raise ValueError(f"compiled kernels support d <= {MAXDIM}, got {d}")


def radius_pairs(points, double r):
    """Sorted ``(m, 2)`` index pairs ``i < j`` with ``|p_i - p_j| <= r``."""
    cdef const double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    cdef int d = pts.shape[1]
    _check_dim(d)
    if n < 2 or r < 0:
        return np.zeros((0, 2), dtype=np.int64)
    grid = build_grid(np.asarray(pts), r)
    cdef const long long[::1] shape = grid.shape
    cdef const long long[::1] strides = grid.strides
    cdef const long long[::1] cell = grid.cell
    cdef const long long[::1] order = grid.order
    cdef const long long[::1] start = grid.start
    cdef const long long[:, ::1] offs = neighbour_offsets(d, 1)
    cdef Py_ssize_t noff = offs.shape[0]
    cdef double r2 = r * r
    cdef vector[long long] out
    cdef long long home[MAXDIM]
    cdef Py_ssize_t i, o, t, j
    cdef long long c, nb
    cdef int k
    cdef bint ok
    with nogil:
        for i in range(n):
            c = cell[i]
            for k in range(d):
                home[k] = (c // strides[k]) % shape[k]
            for o in range(noff):
                nb = 0
                ok = True
                for k in range(d):
                    c = home[k] + offs[o, k]
                    if c < 0 or c >= shape[k]:
                        ok = False
                        break
                    nb += c * strides[k]
                if not ok:
                    continue
                for t in range(start[nb], start[nb + 1]):
                    j = order[t]
                    if j > i and _dist2(pts, i, pts, j, d) <= r2:
                        out.push_back(i)
                        out.push_back(j)
    cdef Py_ssize_t m = out.size() // 2
    res = np.empty((m, 2), dtype=np.int64)
    cdef long long[:, ::1] rv = res
    for t in range(m):
        rv[t, 0] = out[2 * t]
        rv[t, 1] = out[2 * t + 1]
    if m:
        res = res[np.lexsort((res[:, 1], res[:, 0]))]
    return res


def component_labels(Py_ssize_t n, pairs):
    """Union-find over ``pairs``; label = smallest vertex index in the component."""
    cdef const long long[:, ::1] pr = np.ascontiguousarray(pairs, dtype=np.int64).reshape(-1, 2)
    parent_arr = np.arange(n, dtype=np.int64)
    size_arr = np.ones(n, dtype=np.int64)
    labels = np.empty(n, dtype=np.int64)
    first = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] parent = parent_arr
    cdef long long[::1] size = size_arr
    cdef long long[::1] lab = labels
    cdef long long[::1] fst = first
    cdef Py_ssize_t e, i
    cdef long long a, b, tmp
    with nogil:
        for e in range(pr.shape[0]):
            a = pr[e, 0]
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            b = pr[e, 1]
            while parent[b] != b:
                parent[b] = parent[parent[b]]
                b = parent[b]
            if a == b:
                continue
            if size[a] < size[b]:
                tmp = a
                a = b
                b = tmp
            parent[b] = a
            size[a] += size[b]
        for i in range(n):
            a = i
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            if fst[a] < 0:
                fst[a] = i
            lab[i] = fst[a]
    return labels


cdef inline bint _less(double d2a, long long ja, double d2b, long long jb) noexcept nogil:
    return d2a < d2b or (d2a == d2b and ja < jb)


def knn_table(points, int k):
    """``(n, min(k, n-1))`` neighbour indices ordered by (distance, index)."""
    cdef const double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    cdef int d = pts.shape[1]
    _check_dim(d)
    cdef int kk = <int>min(k, n - 1) if n > 0 else 0
    table = np.empty((n, max(kk, 0)), dtype=np.int64)
    if kk <= 0:
        return table
    grid = build_grid(np.asarray(pts), knn_cell_width(np.asarray(pts), kk))
    cdef double h = grid.width
    cdef const long long[::1] shape = grid.shape
    cdef const long long[::1] strides = grid.strides
    cdef const long long[::1] cell = grid.cell
    cdef const long long[::1] order = grid.order
    cdef const long long[::1] start = grid.start
    cdef long long[:, ::1] tab = table
    bd = np.empty(kk, dtype=np.float64)
    bj = np.empty(kk, dtype=np.int64)
    cdef double[::1] best_d = bd
    cdef long long[::1] best_j = bj
    cdef long long home[MAXDIM]
    cdef long long lo[MAXDIM]
    cdef long long hi[MAXDIM]
    cdef long long idx[MAXDIM]
    cdef Py_ssize_t i, t, j
    cdef int cnt, k2, pos, L, Lmax, cheb, dd
    cdef long long c, nb
    cdef double d2, bound
    cdef bint done
    with nogil:
        for i in range(n):
            c = cell[i]
            Lmax = 0
            for dd in range(d):
                home[dd] = (c // strides[dd]) % shape[dd]
                if home[dd] > Lmax:
                    Lmax = <int>home[dd]
                if shape[dd] - 1 - home[dd] > Lmax:
                    Lmax = <int>(shape[dd] - 1 - home[dd])
            cnt = 0
            L = 0
            while True:
                for dd in range(d):
                    lo[dd] = home[dd] - L if home[dd] - L > 0 else 0
                    hi[dd] = home[dd] + L if home[dd] + L < shape[dd] - 1 else shape[dd] - 1
                    idx[dd] = lo[dd]
                done = False
                while not done:
                    cheb = 0
                    nb = 0
                    for dd in range(d):
                        c = idx[dd] - home[dd]
                        if c < 0:
                            c = -c
                        if c > cheb:
                            cheb = <int>c
                        nb += idx[dd] * strides[dd]
                    if cheb == L:
                        for t in range(start[nb], start[nb + 1]):
                            j = order[t]
                            if j == i:
                                continue
                            d2 = _dist2(pts, i, pts, j, d)
                            if cnt < kk:
                                pos = cnt
                                cnt += 1
                            elif _less(d2, j, best_d[kk - 1], best_j[kk - 1]):
                                pos = kk - 1
                            else:
                                continue
                            while pos > 0 and _less(d2, j, best_d[pos - 1], best_j[pos - 1]):
                                best_d[pos] = best_d[pos - 1]
                                best_j[pos] = best_j[pos - 1]
                                pos -= 1
                            best_d[pos] = d2
                            best_j[pos] = j
                    # odometer over the clipped box
                    dd = d - 1
                    while dd >= 0:
                        idx[dd] += 1
                        if idx[dd] <= hi[dd]:
                            break
                        idx[dd] = lo[dd]
                        dd -= 1
                    if dd < 0:
                        done = True
                bound = L * h
                if cnt == kk and best_d[kk - 1] < bound * bound:
                    break
                if L >= Lmax:
                    break
                L += 1
            for k2 in range(kk):
                tab[i, k2] = best_j[k2]
    return table


def hull2d(points):
    """Counter-clockwise hull vertex indices (monotone chain, collinear points dropped)."""
    arr = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = arr.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    srt = np.lexsort((arr[:, 1], arr[:, 0])).astype(np.int64)
    cdef const double[:, ::1] p = arr
    cdef const long long[::1] s = srt
    hull_arr = np.empty(2 * n + 1, dtype=np.int64)
    cdef long long[::1] hv = hull_arr
    cdef Py_ssize_t m = 0, i, lower_size
    cdef long long a, b, c
    cdef double cross
    with nogil:
        for i in range(n):
            c = s[i]
            while m >= 2:
                a = hv[m - 2]
                b = hv[m - 1]
                cross = (p[b, 0] - p[a, 0]) * (p[c, 1] - p[a, 1]) - (p[b, 1] - p[a, 1]) * (p[c, 0] - p[a, 0])
                if cross > 0:
                    break
                m -= 1
            hv[m] = c
            m += 1
        lower_size = m + 1
        i = n - 2
        while i >= 0:
            c = s[i]
            while m >= lower_size:
                a = hv[m - 2]
                b = hv[m - 1]
                cross = (p[b, 0] - p[a, 0]) * (p[c, 1] - p[a, 1]) - (p[b, 1] - p[a, 1]) * (p[c, 0] - p[a, 0])
                if cross > 0:
                    break
                m -= 1
            hv[m] = c
            m += 1
            i -= 1
    if m > 1:
        m -= 1
    out = hull_arr[:m].copy()
    if m == 2 and out[0] == out[1]:
        out = out[:1]
    return out


def shot_field(nodes, points, int kind, double reach, double amplitude,
               double core=1.0, double exponent=0.0):
    """Shot-noise field at ``nodes`` from ``points``, ignoring pairs farther than ``reach``.

    kind 0: ``amplitude * 1{|x| <= reach}``;
    kind 1: ``amplitude * min(1, (core / |x|) ** exponent)`` truncated at ``reach``.
    """
    cdef const double[:, ::1] q = np.ascontiguousarray(nodes, dtype=np.float64)
    cdef const double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t nq = q.shape[0]
    cdef int d = q.shape[1]
    _check_dim(d)
    out_arr = np.zeros(nq, dtype=np.float64)
    if pts.shape[0] == 0 or nq == 0:
        return out_arr
    grid = build_grid(np.asarray(pts), reach)
    cdef double h = grid.width
    cdef const double[::1] glo = grid.lo
    cdef const long long[::1] shape = grid.shape
    cdef const long long[::1] strides = grid.strides
    cdef const long long[::1] order = grid.order
    cdef const long long[::1] start = grid.start
    cdef const long long[:, ::1] offs = neighbour_offsets(d, 1)
    cdef Py_ssize_t noff = offs.shape[0]
    cdef double[::1] out = out_arr
    cdef double reach2 = reach * reach
    cdef double core2 = core * core
    cdef double half = 0.5 * exponent
    cdef int ip = <int>floor(half)
    cdef int mode = 0
    if 0 <= ip <= 64 and half == ip:
        mode = 1
    elif 0 <= ip <= 64 and half - ip == 0.5:
        mode = 2
    cdef long long home[MAXDIM]
    cdef Py_ssize_t i, o, t, j
    cdef long long c, nb
    cdef int k
    cdef bint ok
    cdef double acc, d2
    with nogil:
        for i in range(nq):
            for k in range(d):
                home[k] = <long long>floor((q[i, k] - glo[k]) / h)
            acc = 0.0
            for o in range(noff):
                nb = 0
                ok = True
                for k in range(d):
                    c = home[k] + offs[o, k]
                    if c < 0 or c >= shape[k]:
                        ok = False
                        break
                    nb += c * strides[k]
                if not ok:
                    continue
                for t in range(start[nb], start[nb + 1]):
                    j = order[t]
                    d2 = _dist2(q, i, pts, j, d)
                    if d2 > reach2:
                        continue
                    if kind == 0:
                        acc += amplitude
                    elif d2 <= core2:
                        acc += amplitude
                    else:
                        acc += amplitude * _ratio_pow(core2 / d2, half, ip, mode)
            out[i] = acc
    return out_arr
