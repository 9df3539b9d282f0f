import math

import numpy as np
import pytest

from pvlab import graphs
from pvlab.process import Box, InvalidParameterError, PointConfiguration, SeedSpec, sample_poisson

from oracles import bfs_components


def cfg(*pts):
    return PointConfiguration(np.array(pts, dtype=float))


def test_knn_line_example():
    c = cfg([0, 0], [1, 0], [3, 0])
    g = graphs.build_knn(c, 1)
    assert g.edges.tolist() == [[0, 1], [1, 2]]
    assert graphs.edge_length_functional(c, 1, 1.0) == 3.0
    assert graphs.edge_length_functional(c, 1, 0.0) == 2.0
    assert graphs.edge_length_functional(c, 1, 2.0) == 5.0


def test_scaled_edge_length():
    c = cfg([0, 0], [1, 0], [3, 0])
    assert graphs.scaled_edge_length(c, 1, 1.0, 4.0) == pytest.approx(2.0 * 3.0)


def test_rgg_two_points_and_boundary():
    assert graphs.build_rgg(cfg([0, 0], [1, 0]), 1.0).edges.tolist() == [[0, 1]]
    assert len(graphs.build_rgg(cfg([0, 0], [1.0000001, 0]), 1.0).edges) == 0


def test_rgg_params_radius():
    p = graphs.RggParams(rho=1.0, dim=2, intensity=100.0)
    assert p.radius == pytest.approx(0.1)
    with pytest.raises(InvalidParameterError):
        graphs.RggParams(rho=-1.0, dim=2, intensity=1.0)


def test_degree_and_component_counts():
    # path 0-1-2, pair 3-4, isolated 5
    c = cfg([0, 0], [1, 0], [2, 0], [10, 0], [11, 0], [20, 0])
    g = graphs.build_rgg(c, 1.0)
    assert graphs.degree_count(g, 0) == 1
    assert graphs.degree_count(g, 1) == 4
    assert graphs.degree_count(g, 2) == 1
    assert [graphs.component_count(g, j) for j in (1, 2, 3, 4)] == [1, 1, 1, 0]
    # C_1 counts isolated vertices, so it equals V_0
    assert graphs.component_count(g, 1) == graphs.degree_count(g, 0)


def test_component_sizes_match_bfs(rng):
    for _ in range(20):
        pts = rng.random((150, 2))
        g = graphs.build_rgg(PointConfiguration(pts), 0.08)
        labels = bfs_components(150, g.edges.tolist())
        sizes = np.bincount(labels, minlength=150)[labels]
        assert np.array_equal(g.component_sizes, sizes)


def test_knn_degree_bounds(rng):
    # in the plane every vertex of the 1-NN graph has degree at most 6 (kissing number)
    for _ in range(10):
        c = PointConfiguration(rng.random((200, 2)))
        deg = graphs.build_knn(c, 1).degrees
        assert deg.min() >= 1 and deg.max() <= 6
        assert sum(graphs.knn_degree_count(c, 1, j) for j in range(7)) == 200
    assert graphs.knn_degree_count(c, 1, 9, k_max=6) == 0


def test_knn_small_configurations():
    assert len(graphs.build_knn(PointConfiguration.empty(2), 2).edges) == 0
    assert len(graphs.build_knn(cfg([0, 0]), 2).edges) == 0
    assert graphs.build_knn(cfg([0, 0], [1, 1], [2, 0]), 5).edges.tolist() == [[0, 1], [0, 2], [1, 2]]


def test_functionals_are_permutation_invariant(rng):
    pts = rng.random((80, 2))
    perm = rng.permutation(80)
    a, b = PointConfiguration(pts), PointConfiguration(pts[perm])
    params = graphs.RggParams(1.0, 2, 80.0)
    for F in (graphs.rgg_functional("degree", 0, params), graphs.rgg_functional("component", 2, params),
              graphs.knn_edge_length_functional(2, 1.0, 80.0), graphs.knn_degree_functional(1, 2)):
        assert F(a) == pytest.approx(F(b), rel=1e-12)


def test_rgg_add_point_changes_locally():
    # a point far from everything is isolated and raises V_0 by one
    c = sample_poisson(Box.unit(2), 50, SeedSpec(4))
    F = graphs.rgg_functional("degree", 0, graphs.RggParams(1.0, 2, 50.0))
    assert F(c.add(np.array([5.0, 5.0]))) - F(c) == 1.0


def test_write_edge_list(tmp_path):
    g = graphs.build_knn(cfg([0, 0], [1, 0], [3, 0]), 1)
    path = tmp_path / "edges.csv"
    graphs.write_edge_list(g, path)
    assert path.read_text().splitlines() == ["u,v", "0,1", "1,2"]


def test_isolated_vertex_expectation():
    # E[V_0] = s * int_W exp(-s |B(x, r) cap W|) dx; for W = unit square, rho = 1, s = 400,
    # interior contribution s * exp(-pi) dominates; compare with Monte Carlo at 3 SE
    s = 400.0
    params = graphs.RggParams(1.0, 2, s)
    F = graphs.rgg_functional("degree", 0, params)
    vals = np.array([F(sample_poisson(Box.unit(2), s, SeedSpec(8, (0, r)))) for r in range(1500)])
    r = params.radius

    def area(x, y):
        # |B((x, y), r) cap [0,1]^2| by quadrature on a fine grid
        g = np.linspace(-r, r, 161)
        X, Y = np.meshgrid(g, g)
        inside = (X**2 + Y**2 <= r * r) & (x + X >= 0) & (x + X <= 1) & (y + Y >= 0) & (y + Y <= 1)
        return inside.mean() * 4 * r * r

    xs = (np.arange(40) + 0.5) / 40
    mean = s * np.mean([[math.exp(-s * area(x, y)) for x in xs] for y in xs])
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean() - mean) < 3 * se + 0.02 * mean
