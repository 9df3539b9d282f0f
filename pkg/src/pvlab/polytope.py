"""Convex hulls in d = 2, 3 and the L^p surface area of polytopes.

``dist0`` of a facet is the support number (distance from the origin to the
facet's hyperplane) when the origin lies in the hull, and the distance from
the origin to the facet itself otherwise.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from pvlab import kernels
from pvlab.malliavin import Functional
from pvlab.process import InvalidParameterError, PointConfiguration

__all__ = [
    "DegenerateHullError",
    "DegenerateSimplexError",
    "Facet",
    "HullPolytope",
    "Lemma43Report",
    "PolytopeFunctional",
    "SimplexUpdate",
    "attach_apex",
    "check_lemma43",
    "convex_hull",
    "delta_p",
    "hull_to_json",
    "lp_surface_area",
    "polytope_functional",
    "random_admissible_simplex",
]

log = logging.getLogger(__name__)

_REL_TOL = 1e-12


class DegenerateHullError(ValueError):
    """The points are affinely dependent (no full-dimensional hull)."""


class DegenerateSimplexError(ValueError):
    pass


@dataclass(frozen=True)
class Facet:
    ids: tuple[int, ...]
    measure: float
    dist0: float
    normal: np.ndarray = field(repr=False, compare=False)
    offset: float = field(repr=False, compare=False)  # normal . x = offset on the facet


@dataclass(frozen=True)
class HullPolytope:
    points: np.ndarray = field(repr=False)
    vertices: np.ndarray
    facets: tuple[Facet, ...]
    origin_inside: bool

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @cached_property
    def normals(self) -> np.ndarray:
        return np.array([f.normal for f in self.facets])

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.array([f.offset for f in self.facets])

    def signed_distances(self, x) -> np.ndarray:
        """Signed distance of ``x`` to every facet hyperplane (positive = outside)."""
        return self.normals @ np.asarray(x, dtype=np.float64) - self.offsets

    def volume(self) -> float:
        """Divergence theorem with the vertex centroid as reference point."""
        c = self.points[self.vertices].mean(axis=0)
        return sum(f.measure * (f.offset - f.normal @ c) for f in self.facets) / self.dim

    def euler_characteristic(self) -> int:
        """``V - E + F`` of the (triangulated) boundary complex."""
        if self.dim == 2:
            return len(self.vertices) - len(self.facets)
        edges = {tuple(sorted((f.ids[a], f.ids[b]))) for f in self.facets for a, b in ((0, 1), (1, 2), (0, 2))}
        return len(self.vertices) - len(edges) + len(self.facets)


def _point_segment_distance(x, a, b) -> float:
    ab = b - a
    t = float(np.clip(np.dot(x - a, ab) / np.dot(ab, ab), 0.0, 1.0))
    return float(np.linalg.norm(x - (a + t * ab)))


def _point_triangle_distance(x, a, b, c) -> float:
    # closest point on a triangle, Voronoi-region case analysis
    ab, ac, ap = b - a, c - a, x - a
    d1, d2 = ab @ ap, ac @ ap
    if d1 <= 0 and d2 <= 0:
        return float(np.linalg.norm(x - a))
    bp = x - b
    d3, d4 = ab @ bp, ac @ bp
    if d3 >= 0 and d4 <= d3:
        return float(np.linalg.norm(x - b))
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        return float(np.linalg.norm(x - (a + d1 / (d1 - d3) * ab)))
    cp = x - c
    d5, d6 = ab @ cp, ac @ cp
    if d6 >= 0 and d5 <= d6:
        return float(np.linalg.norm(x - c))
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        return float(np.linalg.norm(x - (a + d2 / (d2 - d6) * ac)))
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return float(np.linalg.norm(x - (b + w * (c - b))))
    denom = 1.0 / (va + vb + vc)
    v, w = vb * denom, vc * denom
    return float(np.linalg.norm(x - (a + ab * v + ac * w)))


def _hull3d(p: np.ndarray, eps: float) -> list[tuple[int, int, int]]:
    """Incremental hull; returns outward-oriented triangles."""
    n = len(p)
    i0 = int(np.lexsort((p[:, 2], p[:, 1], p[:, 0]))[0])
    d01 = np.linalg.norm(p - p[i0], axis=1)
    i1 = int(np.argmax(d01))
    if d01[i1] <= eps:
        raise DegenerateHullError("all points coincide")
    u = (p[i1] - p[i0]) / d01[i1]
    dline = np.linalg.norm(np.cross(p - p[i0], u), axis=1)
    i2 = int(np.argmax(dline))
    if dline[i2] <= eps:
        raise DegenerateHullError("points are collinear")
    nrm = np.cross(p[i1] - p[i0], p[i2] - p[i0])
    nrm /= np.linalg.norm(nrm)
    dplane = (p - p[i0]) @ nrm
    i3 = int(np.argmax(np.abs(dplane)))
    if abs(dplane[i3]) <= eps:
        raise DegenerateHullError("points are coplanar")

    inner = p[[i0, i1, i2, i3]].mean(axis=0)
    cap = 2 * n + 8
    normals = np.zeros((cap * 2, 3))
    offsets = np.zeros(cap * 2)
    alive = np.zeros(cap * 2, dtype=bool)
    faces: list[tuple[int, int, int]] = []
    edge_face: dict[tuple[int, int], int] = {}

    def add_face(a, b, c):
        nonlocal normals, offsets, alive
        nv = np.cross(p[b] - p[a], p[c] - p[a])
        ln = np.linalg.norm(nv)
        nv = nv / ln if ln > 0 else nv
        fid = len(faces)
        if fid >= len(alive):
            normals = np.concatenate([normals, np.zeros_like(normals)])
            offsets = np.concatenate([offsets, np.zeros_like(offsets)])
            alive = np.concatenate([alive, np.zeros_like(alive)])
        faces.append((a, b, c))
        normals[fid] = nv
        offsets[fid] = nv @ p[a]
        alive[fid] = True
        edge_face[(a, b)] = fid
        edge_face[(b, c)] = fid
        edge_face[(c, a)] = fid

    for a, b, c in ((i0, i1, i2), (i0, i1, i3), (i0, i2, i3), (i1, i2, i3)):
        nv = np.cross(p[b] - p[a], p[c] - p[a])
        if nv @ (inner - p[a]) > 0:
            b, c = c, b
        add_face(a, b, c)

    initial = {i0, i1, i2, i3}
    for i in range(n):
        if i in initial:
            continue
        ids = np.flatnonzero(alive[: len(faces)])
        dist = normals[ids] @ p[i] - offsets[ids]
        visible = set(ids[dist > eps].tolist())
        if not visible:
            continue
        horizon = []
        for f in visible:
            a, b, c = faces[f]
            for e in ((a, b), (b, c), (c, a)):
                if edge_face[(e[1], e[0])] not in visible:
                    horizon.append(e)
        for f in visible:
            alive[f] = False
            a, b, c = faces[f]
            for e in ((a, b), (b, c), (c, a)):
                if edge_face.get(e) == f:
                    del edge_face[e]
        for a, b in horizon:
            add_face(a, b, i)
    return [faces[f] for f in np.flatnonzero(alive[: len(faces)])]


def _simplex_measure(pts: np.ndarray) -> float:
    """k-dimensional volume of the simplex spanned by ``k + 1`` points."""
    k = len(pts) - 1
    if k == 0:
        return 1.0
    e = pts[1:] - pts[0]
    g = e @ e.T
    return math.sqrt(max(np.linalg.det(g), 0.0)) / math.factorial(k)


def convex_hull(config, tol: float = _REL_TOL) -> HullPolytope:
    """Convex hull of a configuration in d = 2 (monotone chain) or d = 3 (incremental).

    Raises :class:`DegenerateHullError` when the points do not span R^d.
    """
    pts = config.points if isinstance(config, PointConfiguration) else np.asarray(config, dtype=np.float64)
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    n, d = pts.shape
    if d not in (2, 3):
        raise InvalidParameterError(f"convex hulls are implemented for d in {{2, 3}}, got d={d}")
    if n < d + 1:
        raise DegenerateHullError(f"need at least {d + 1} points, got {n}")
    scale = max(float(np.abs(pts).max()), 1e-300)
    eps = tol * scale
    if d == 2:
        ring = kernels.hull2d(pts)
        if len(ring) < 3:
            raise DegenerateHullError("points are collinear")
        tris = [(int(ring[i]), int(ring[(i + 1) % len(ring)])) for i in range(len(ring))]
    else:
        tris = _hull3d(pts, eps)

    normals, offsets, measures = [], [], []
    for ids in tris:
        v = pts[list(ids)]
        if d == 2:
            e = v[1] - v[0]
            nv = np.array([e[1], -e[0]])
        else:
            nv = np.cross(v[1] - v[0], v[2] - v[0])
        ln = float(np.linalg.norm(nv))
        nv = nv / ln if ln > 0 else nv
        normals.append(nv)
        offsets.append(float(nv @ v[0]))
        measures.append(_simplex_measure(v))
    offsets_arr = np.asarray(offsets)
    inside = bool(np.all(offsets_arr >= -eps))
    facets = []
    for ids, nv, off, meas in zip(tris, normals, offsets, measures):
        if inside:
            dist0 = max(off, 0.0)
        elif d == 2:
            dist0 = _point_segment_distance(np.zeros(2), pts[ids[0]], pts[ids[1]])
        else:
            dist0 = _point_triangle_distance(np.zeros(3), *pts[list(ids)])
        facets.append(Facet(tuple(ids), meas, dist0, nv, off))
    verts = np.unique(np.asarray(tris, dtype=np.int64).ravel())
    return HullPolytope(pts, verts, tuple(facets), inside)


def _pow0(r, e):
    # 0 ** 0 := 1 convention
    return 1.0 if e == 0 else r**e


def lp_surface_area(hull: HullPolytope, p: float) -> float:
    """``sum over facets of dist0 ** (1 - p) * measure``."""
    if not 0.0 <= p <= 1.0:
        raise InvalidParameterError(f"p must lie in [0, 1], got {p}")
    e = 1.0 - p
    total = 0.0
    for f in hull.facets:
        if f.dist0 == 0.0 and e == 0.0:
            log.info("facet %s passes through the origin; using 0**0 = 1", f.ids)
        total += _pow0(f.dist0, e) * f.measure
    return total


def hull_to_json(hull: HullPolytope) -> str:
    doc = {
        "vertices": [{"id": int(i), "coords": hull.points[i].tolist()} for i in hull.vertices],
        "facets": [{"ids": list(f.ids), "measure": f.measure, "dist0": f.dist0} for f in hull.facets],
    }
    return json.dumps(doc, indent=2)


def _plane_distance(pts: np.ndarray, x: np.ndarray) -> float:
    """Distance from ``x`` to the affine hull of ``d`` points in R^d."""
    e = pts[1:] - pts[0]
    _, sv, vt = np.linalg.svd(e)
    nv = vt[-1]
    return abs(float(nv @ (x - pts[0])))


def _flat_distance(pts: np.ndarray, x: np.ndarray) -> float:
    """Distance from ``x`` to the affine hull of ``pts`` (any number of points)."""
    if len(pts) == 1:
        return float(np.linalg.norm(x - pts[0]))
    e = (pts[1:] - pts[0]).T
    coef, *_ = np.linalg.lstsq(e, x - pts[0], rcond=None)
    return float(np.linalg.norm(x - pts[0] - e @ coef))


@dataclass(frozen=True)
class SimplexUpdate:
    """Simplex ``S(z_1..z_d, apex)`` glued onto the base facet ``S(z_1..z_d)``.

    Index ``i < d`` refers to the side facet opposite ``z_{i+1}``; index ``d``
    is the base. Facet distances are hyperplane distances to the origin.
    """

    base: np.ndarray
    apex: np.ndarray

    def __post_init__(self):
        base = np.atleast_2d(np.asarray(self.base, dtype=np.float64))
        apex = np.asarray(self.apex, dtype=np.float64).ravel()
        d = len(apex)
        if d < 2 or base.shape != (d, d):
            raise DegenerateSimplexError(f"need d >= 2 base points of dimension d, got {base.shape} and {d}")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "apex", apex)
        scale = max(float(np.abs(np.vstack([base, apex])).max()), 1e-300)
        if _simplex_measure(base) <= _REL_TOL * scale ** (d - 1):
            raise DegenerateSimplexError("base facet is degenerate")
        if self.apex_height <= _REL_TOL * scale:
            raise DegenerateSimplexError("apex lies on the base hyperplane")

    @property
    def dim(self) -> int:
        return len(self.apex)

    def facet_points(self, i: int) -> np.ndarray:
        if i == self.dim:
            return self.base
        return np.vstack([np.delete(self.base, i, axis=0), self.apex[None, :]])

    @cached_property
    def rho(self) -> np.ndarray:
        o = np.zeros(self.dim)
        return np.array([_plane_distance(self.facet_points(i), o) for i in range(self.dim + 1)])

    @cached_property
    def facet_measures(self) -> np.ndarray:
        return np.array([_simplex_measure(self.facet_points(i)) for i in range(self.dim + 1)])

    @cached_property
    def face_measures(self) -> np.ndarray:
        """``(d-2)``-measures of the base faces ``T_i`` (counting measure for d = 2)."""
        return np.array([_simplex_measure(np.delete(self.base, i, axis=0)) for i in range(self.dim)])

    @cached_property
    def apex_height(self) -> float:
        return _plane_distance(self.base, self.apex)

    @cached_property
    def foot(self) -> np.ndarray:
        """Orthogonal projection of the apex onto the base hyperplane."""
        e = (self.base[1:] - self.base[0]).T
        coef, *_ = np.linalg.lstsq(e, self.apex - self.base[0], rcond=None)
        return self.base[0] + e @ coef

    @cached_property
    def foot_barycentric(self) -> np.ndarray:
        e = (self.base[1:] - self.base[0]).T
        coef, *_ = np.linalg.lstsq(e, self.foot - self.base[0], rcond=None)
        return np.concatenate([[1.0 - coef.sum()], coef])

    @cached_property
    def heights(self) -> np.ndarray:
        """Distances from the foot to the affine hulls of the faces ``T_i``."""
        return np.array([_flat_distance(np.delete(self.base, i, axis=0), self.foot) for i in range(self.dim)])

    def side_excess(self) -> float:
        """``1/(d-1) * sum_i |T_i| (sqrt(h_i^2 + hbar^2) - h_i)``."""
        h = self.heights
        return float(np.sum(self.face_measures * (np.hypot(h, self.apex_height) - h))) / (self.dim - 1)


def delta_p(update: SimplexUpdate, p: float) -> float:
    """Change of the L^p surface area when the simplex is glued on its base."""
    e = 1.0 - p
    d = update.dim
    side = sum(_pow0(update.rho[i], e) * update.facet_measures[i] for i in range(d))
    return float(side - _pow0(update.rho[d], e) * update.facet_measures[d])


@dataclass(frozen=True)
class Lemma43Report:
    admissible: bool
    reason: str = ""
    slack_first: float = math.nan
    slack_second: float = math.nan
    lhs_first: float = math.nan
    rhs_first: float = math.nan
    lhs_second: float = math.nan
    rhs_second: float = math.nan

    @property
    def passed(self) -> bool:
        return self.admissible and min(self.slack_first, self.slack_second) >= -1e-9


def _admissibility(update: SimplexUpdate, tol: float = 1e-12) -> str:
    pts = np.vstack([update.base, update.apex])
    if np.any(np.einsum("ij,ij->i", pts, pts) > 1.0 + tol):
        return "vertex outside the closed unit ball"
    rho = update.rho
    if rho[-1] > rho[:-1].min():
        return "base facet is not the one closest to the origin"
    if rho[-1] <= 0:
        return "base hyperplane passes through the origin"
    if np.any(update.foot_barycentric < -tol):
        return "apex does not project into the base facet"
    return ""


def check_lemma43(update: SimplexUpdate, p: float, p1: float, p2: float) -> Lemma43Report:
    """Evaluate both simplex-update inequalities and report ``rhs - lhs`` slacks.

    Inadmissible inputs (base not closest to the origin, apex projecting
    outside the base, vertices outside the unit ball, bad exponents) are
    skipped with a reason instead of raising.
    """
    if not (0 <= p <= 1 and 0 <= p1 < p2 <= 1):
        return Lemma43Report(False, f"need p in [0,1] and 0 <= p1 < p2 <= 1, got {p}, {p1}, {p2}")
    reason = _admissibility(update)
    if reason:
        return Lemma43Report(False, reason)
    d = update.dim
    rho, lam = update.rho, update.facet_measures
    r = rho[d]
    h = update.heights
    per_face = update.face_measures * (np.hypot(h, update.apex_height) - h)
    excess = float(per_face.sum()) / (d - 1)

    lhs1 = abs(delta_p(update, p) - excess)
    rhs1 = r ** (-p) * (1 - r) * float(lam.sum())
    first_order = (p2 - p1) * float(np.sum((rho[:d] - r) * lam[:d]))
    lhs2 = abs(delta_p(update, p1) - delta_p(update, p2) - first_order)
    rhs2 = (2 * r ** (-p2 - 1) * (1 - r) ** 2 * float(lam[:d].sum())
            + r ** (-p2) * (1 - r) * float(per_face.sum()))
    return Lemma43Report(True, "", rhs1 - lhs1, rhs2 - lhs2, lhs1, rhs1, lhs2, rhs2)


def _uniform_ball(rng, n, d, shell=False):
    x = rng.normal(size=(n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    r = rng.random(n) ** (1.0 / d)
    if shell:
        r = 1.0 - 0.1 * rng.random(n)
    return x * r[:, None]


def random_admissible_simplex(rng: np.random.Generator, d: int = 2, max_tries: int = 100_000) -> SimplexUpdate:
    """Random simplex in the unit ball whose base is the facet closest to the origin
    and whose apex projects into the base.

    Half of the draws use vertices in the outer shell ``0.9 <= |z| <= 1``,
    the regime where facets are nearly tangent to the sphere.
    """
    for _ in range(max_tries):
        z = _uniform_ball(rng, d + 1, d, shell=rng.random() < 0.5)
        try:
            probe = SimplexUpdate(z[:d], z[d])
        except DegenerateSimplexError:
            continue
        # rho[i] belongs to the facet opposite vertex i, so that vertex becomes the apex
        apex_id = int(np.argmin(probe.rho))
        base = np.delete(z, apex_id, axis=0)
        try:
            upd = SimplexUpdate(base, z[apex_id])
        except DegenerateSimplexError:
            continue
        if not _admissibility(upd):
            return upd
    raise RuntimeError("no admissible simplex found")


def attach_apex(hull: HullPolytope, facet_index: int, rng: np.random.Generator,
                max_halvings: int = 60) -> tuple[SimplexUpdate, np.ndarray]:
    """Pick an apex above ``facet_index`` that sees exactly that facet.

    Returns the update and the apex coordinates.
    """
    f = hull.facets[facet_index]
    verts = hull.points[list(f.ids)]
    w = rng.dirichlet(np.ones(len(verts)))
    foot = w @ verts
    t = (0.05 + 0.25 * rng.random()) * f.measure ** (1.0 / (hull.dim - 1))
    eps = _REL_TOL * max(float(np.abs(hull.points).max()), 1.0)
    for _ in range(max_halvings):
        apex = foot + t * f.normal
        sd = hull.signed_distances(apex)
        if np.count_nonzero(sd > eps) == 1 and sd[facet_index] > eps:
            return SimplexUpdate(verts, apex), apex
        t *= 0.5
    raise DegenerateSimplexError("could not place an apex visible from a single facet")


class PolytopeFunctional(Functional):
    """``A_p`` of the hull of the configuration (optionally scaled by ``s``).

    Configurations with fewer than ``d + 1`` points or a degenerate hull map
    to 0; ``degenerate_count`` counts how often that happened.
    """

    def __init__(self, p: float, intensity: float, dim: int = 2, scaled: bool = False,
                 include_origin: bool = False):
        if not 0 <= p <= 1:
            raise InvalidParameterError(f"p must lie in [0, 1], got {p}")
        self.p = p
        self.intensity = intensity
        self.dim = dim
        self.scaled = scaled
        self.include_origin = include_origin
        self.degenerate_count = 0
        factor = intensity if scaled else 1.0
        name = "sA" if scaled else "A"
        super().__init__(lambda c: factor * self._area(c),
                         f"polytope_{name}[p={p:g},s={intensity:g},d={dim}]")

    def _area(self, config: PointConfiguration) -> float:
        pts = config.points
        if self.include_origin:
            pts = np.vstack([pts, np.zeros((1, self.dim))])
        if len(pts) < self.dim + 1:
            self.degenerate_count += 1
            return 0.0
        try:
            return lp_surface_area(convex_hull(pts), self.p)
        except DegenerateHullError:
            self.degenerate_count += 1
            return 0.0


def polytope_functional(p: float, intensity: float, dim: int = 2, scaled: bool = False,
                        include_origin: bool = False) -> PolytopeFunctional:
    return PolytopeFunctional(p, intensity, dim, scaled, include_origin)
