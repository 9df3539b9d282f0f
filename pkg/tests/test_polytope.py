import itertools
import json
import math

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from pvlab import polytope as P
from pvlab.process import Ball, PointConfiguration, SeedSpec, sample_poisson

from oracles import shoelace

DIAMOND = np.array([[1.0, 0], [0, 1], [-1, 0], [0, -1]])


def test_diamond_hull():
    h = P.convex_hull(DIAMOND)
    assert len(h.facets) == 4
    for f in h.facets:
        assert f.measure == pytest.approx(math.sqrt(2))
        assert f.dist0 == pytest.approx(1 / math.sqrt(2))
    for p in (0.0, 0.3, 1.0):
        assert P.lp_surface_area(h, p) == pytest.approx(4 * 2 ** (p / 2))
    assert P.lp_surface_area(h, 0.0) == pytest.approx(2 * shoelace(DIAMOND))


def test_interior_point_not_a_vertex():
    h = P.convex_hull(np.vstack([DIAMOND, [[0.0, 0.0]]]))
    assert sorted(h.vertices.tolist()) == [0, 1, 2, 3]


def test_regular_tetrahedron():
    t = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    h = P.convex_hull(t)
    areas = [f.measure for f in h.facets]
    assert len(areas) == 4
    assert np.allclose(areas, 2 * math.sqrt(3))
    assert h.euler_characteristic() == 2
    # origin is the centroid: all support numbers equal 1/sqrt(3)
    assert np.allclose([f.dist0 for f in h.facets], 1 / math.sqrt(3))


def test_inscribed_polygon_area_independent_of_p():
    # regular hexagon whose edges are tangent to the unit circle
    ang = np.arange(6) * math.pi / 3
    pts = np.column_stack([np.cos(ang), np.sin(ang)]) / math.cos(math.pi / 6)
    h = P.convex_hull(pts)
    vals = [P.lp_surface_area(h, p) for p in (0, 0.5, 1)]
    assert np.allclose(vals, vals[0])


@pytest.mark.parametrize("d", [2, 3])
def test_against_qhull(d, rng):
    for _ in range(30):
        pts = rng.normal(size=(int(rng.integers(d + 1, 400)), d))
        h = P.convex_hull(pts)
        ref = ConvexHull(pts)
        assert set(h.vertices.tolist()) == set(ref.vertices.tolist())
        assert h.volume() == pytest.approx(ref.volume, rel=1e-10)
        assert P.lp_surface_area(h, 1.0) == pytest.approx(ref.area, rel=1e-10)
        diam = np.ptp(pts, axis=0).max()
        assert np.max(pts @ h.normals.T - h.offsets) <= 1e-9 * diam
        if d == 3:
            assert h.euler_characteristic() == 2
        if h.origin_inside:
            assert P.lp_surface_area(h, 0.0) == pytest.approx(d * h.volume(), rel=1e-12)


def test_outward_orientation(rng):
    pts = rng.normal(size=(100, 3))
    h = P.convex_hull(pts)
    c = pts.mean(axis=0)
    assert np.all(h.normals @ c - h.offsets < 0)


def test_idempotent(rng):
    for d in (2, 3):
        pts = rng.normal(size=(200, d))
        h = P.convex_hull(pts)
        h2 = P.convex_hull(pts[h.vertices])
        f1 = sorted(tuple(sorted(f.ids)) for f in h.facets)
        f2 = sorted(tuple(sorted(h.vertices[list(f.ids)].tolist())) for f in h2.facets)
        assert f1 == f2


def test_retriangulation_invariance(rng):
    cube = np.array(list(itertools.product([-1.0, 1.0], repeat=3)))
    ref = None
    for _ in range(10):
        pts = cube[rng.permutation(8)]
        h = P.convex_hull(pts)
        vals = np.array([P.lp_surface_area(h, p) for p in (0.0, 0.5, 1.0)])
        assert np.allclose(vals, 24.0)
        ref = vals if ref is None else ref
        assert np.allclose(vals, ref, rtol=1e-14)


def test_monotone_in_p_inside_unit_ball(rng):
    for _ in range(20):
        cfg = sample_poisson(Ball.centered(2, 1.0), 200, SeedSpec(1, (0, int(rng.integers(1000)))))
        h = P.convex_hull(cfg)
        vals = [P.lp_surface_area(h, p) for p in np.linspace(0, 1, 11)]
        assert np.all(np.diff(vals) >= -1e-12)


def test_degenerate_inputs():
    with pytest.raises(P.DegenerateHullError):
        P.convex_hull(np.array([[0.0, 0], [1, 1], [2, 2]]))
    with pytest.raises(P.DegenerateHullError):
        P.convex_hull(np.array([[0.0, 0], [1, 1]]))
    with pytest.raises(P.DegenerateHullError):
        P.convex_hull(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0.3, 0.2, 0]]))
    with pytest.raises(ValueError):
        P.lp_surface_area(P.convex_hull(DIAMOND), 1.5)


def test_zero_power_zero_convention(caplog):
    # origin on an edge: that facet has dist0 = 0 and p = 1 uses 0**0 = 1
    pts = np.array([[-1.0, 0], [1, 0], [0, 1]])
    h = P.convex_hull(pts)
    assert min(f.dist0 for f in h.facets) == 0.0
    with caplog.at_level("INFO", logger="pvlab.polytope"):
        a1 = P.lp_surface_area(h, 1.0)
    assert a1 == pytest.approx(2 + 2 * math.sqrt(2))
    assert "0**0" in caplog.text


def test_origin_outside_uses_set_distance():
    pts = np.array([[2.0, 1], [3, 1], [2, 2]])
    h = P.convex_hull(pts)
    assert not h.origin_inside
    d = sorted(f.dist0 for f in h.facets)
    assert d[0] == pytest.approx(math.hypot(2, 1))  # closest vertex


def test_hull_json():
    doc = json.loads(P.hull_to_json(P.convex_hull(DIAMOND)))
    assert set(doc) == {"vertices", "facets"}
    assert set(doc["facets"][0]) == {"ids", "measure", "dist0"}
    assert len(doc["vertices"]) == 4


def test_delta_p_example():
    base = np.array([[1.0, 0], [0, 1]])
    apex = np.array([0.9, 0.9])
    upd = P.SimplexUpdate(base, apex)
    tri = np.array([[0.0, 0], [1, 0], [0, 1]])
    old, new = P.convex_hull(tri), P.convex_hull(np.vstack([tri, apex]))
    for p in (0, 0.25, 0.5, 0.75, 1):
        assert abs(P.lp_surface_area(new, p) - P.lp_surface_area(old, p) - P.delta_p(upd, p)) <= 1e-10


def test_delta_one_identity(rng):
    for d in (2, 3):
        for _ in range(50):
            upd = P.random_admissible_simplex(rng, d)
            assert P.delta_p(upd, 1.0) == pytest.approx(upd.side_excess(), abs=1e-12)


def test_delta_vanishes_as_apex_flattens():
    base = np.array([[1.0, 0], [0, 1]])
    vals = [abs(P.delta_p(P.SimplexUpdate(base, np.array([0.5, 0.5]) + t * np.array([1, 1]) / math.sqrt(2)), 0.5))
            for t in (1e-1, 1e-3, 1e-7)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-6  # first order in the apex height
    with pytest.raises(P.DegenerateSimplexError):
        P.SimplexUpdate(base, np.array([0.5, 0.5]))


@pytest.mark.parametrize("d", [2, 3])
def test_lemma43_slacks(d, rng):
    grid = [0.0, 0.5, 1.0]
    for _ in range(100):
        upd = P.random_admissible_simplex(rng, d)
        for p in grid:
            for p1, p2 in itertools.combinations(grid, 2):
                rep = P.check_lemma43(upd, p, p1, p2)
                assert rep.admissible and rep.passed, rep


def test_lemma43_symmetric_first_order_term():
    # equilateral triangle centred at the origin: all rho_i equal
    ang = math.pi / 2 + np.arange(3) * 2 * math.pi / 3
    z = 0.9 * np.column_stack([np.cos(ang), np.sin(ang)])
    upd = P.SimplexUpdate(z[:2], z[2])
    assert np.allclose(upd.rho, upd.rho[0])
    term = float(np.sum((upd.rho[:2] - upd.rho[2]) * upd.facet_measures[:2]))
    assert abs(term) < 1e-15


def test_lemma43_skips_inadmissible():
    upd = P.SimplexUpdate(np.array([[0.5, 0.8], [0.5, -0.8]]), np.array([-0.1, 0.0]))
    rep = P.check_lemma43(upd, 0.5, 0.0, 1.0)
    assert not rep.admissible and "closest" in rep.reason
    rep = P.check_lemma43(upd, 0.5, 1.0, 0.0)
    assert not rep.admissible


def test_attach_apex_sees_single_facet(rng):
    pts = np.vstack([rng.uniform(-1, 1, (30, 3)), np.zeros((1, 3))])
    h = P.convex_hull(pts)
    for i in range(0, len(h.facets), 5):
        upd, apex = P.attach_apex(h, i, rng)
        assert np.count_nonzero(h.signed_distances(apex) > 0) == 1


def test_polytope_functional_degenerate_counter():
    F = P.polytope_functional(1.0, 100.0)
    assert F(PointConfiguration.empty(2)) == 0.0
    assert F(PointConfiguration(np.array([[0.0, 0], [0.5, 0.5]]))) == 0.0
    assert F.degenerate_count == 2
    assert "p=1" in F.label and "s=100" in F.label


def test_polytope_functional_area_and_perimeter():
    A0 = P.polytope_functional(0.0, 100.0)
    sA1 = P.polytope_functional(1.0, 100.0, scaled=True)
    means = {}
    for s in (100.0, 2000.0):
        per = []
        for r in range(40):
            cfg = sample_poisson(Ball.centered(2, 1.0), s, SeedSpec(2, (int(s), r)))
            h = P.convex_hull(cfg)
            if s == 100.0:
                ring = cfg.points[np.array(sorted(h.vertices, key=lambda i: math.atan2(*cfg.points[i][::-1])))]
                assert abs(A0(cfg) - 2 * shoelace(ring)) <= 1e-12 * 2 * math.pi
                assert sA1(cfg) == pytest.approx(100.0 * P.lp_surface_area(h, 1.0))
            per.append(P.lp_surface_area(h, 1.0))
        means[s] = np.mean(per)
    assert means[100.0] < means[2000.0] < 2 * math.pi
    assert means[2000.0] > 0.99 * 2 * math.pi
