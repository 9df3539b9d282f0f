import numpy as np
import pytest

from pvlab import kernels

from oracles import bfs_components, knn_edges, rgg_edges


def _random_instance(rng):
    n = int(rng.integers(0, 120))
    d = int(rng.integers(1, 4))
    pts = rng.random((n, d))
    if n > 4 and rng.random() < 0.3:
        pts[: n // 4] = pts[n // 4: 2 * (n // 4)]  # exact duplicates
    if n > 4 and rng.random() < 0.2:
        pts = np.round(pts * 5) / 5  # many ties
    return pts


def test_radius_pairs_matches_brute_force(backend, rng):
    for _ in range(40):
        pts = _random_instance(rng)
        r = float(rng.uniform(0.0, 0.5))
        got = kernels.radius_pairs(pts, r)
        assert {tuple(e) for e in got.tolist()} == rgg_edges(pts, r)
        assert np.all(got[:, 0] < got[:, 1]) if len(got) else True


def test_knn_table_matches_brute_force(backend, rng):
    for _ in range(40):
        pts = _random_instance(rng)
        k = int(rng.integers(1, 6))
        table = kernels.knn_table(pts, k)
        n = len(pts)
        assert table.shape == (n, min(k, max(n - 1, 0)))
        d2 = ((pts[:, None] - pts[None]) ** 2).sum(-1)
        for i in range(n):
            ref = [j for _, j in sorted((d2[i, j], j) for j in range(n) if j != i)[:k]]
            assert table[i].tolist() == ref
        edges = {(min(i, int(j)), max(i, int(j))) for i in range(n) for j in table[i]}
        assert edges == knn_edges(pts, k)


def test_component_labels_match_bfs(backend, rng):
    for _ in range(40):
        n = int(rng.integers(1, 150))
        m = int(rng.integers(0, 2 * n))
        e = rng.integers(0, n, size=(m, 2))
        e = e[e[:, 0] != e[:, 1]]
        pairs = np.sort(e, axis=1).astype(np.int64)
        assert kernels.component_labels(n, pairs).tolist() == bfs_components(n, pairs.tolist()).tolist()


def test_component_labels_small():
    assert kernels.component_labels(5, np.array([[0, 3], [3, 4]])).tolist() == [0, 1, 2, 0, 0]


def test_hull2d_counter_clockwise(backend, rng):
    from scipy.spatial import ConvexHull
    for _ in range(30):
        pts = rng.normal(size=(int(rng.integers(3, 200)), 2))
        ring = kernels.hull2d(pts)
        assert set(ring.tolist()) == set(ConvexHull(pts).vertices.tolist())
        p = pts[ring]
        u = np.roll(p, -1, axis=0) - p
        v = np.roll(u, -1, axis=0)
        cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        assert np.all(cross > 0)


@pytest.mark.parametrize("kind, exponent", [(0, 0.0), (1, 7.0), (1, 6.0), (1, 4.3)])
def test_shot_field_matches_direct_sum(backend, rng, kind, exponent):
    pts = rng.uniform(-4, 4, size=(300, 2))
    nodes = rng.uniform(-3, 3, size=(500, 2))
    reach = 1.5 if kind == 0 else 3.0
    got = kernels.shot_field(nodes, pts, kind, reach, 2.0, 0.7, exponent)
    d = np.sqrt(((nodes[:, None] - pts[None]) ** 2).sum(-1))
    if kind == 0:
        ref = np.where(d <= reach, 2.0, 0.0).sum(1)
    else:
        ref = np.where(d <= reach, 2.0 * np.minimum(1.0, (0.7 / np.maximum(d, 1e-300)) ** exponent), 0.0).sum(1)
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)


def test_backends_agree_on_knn_with_ties(rng):
    if len(kernels.available_backends()) < 2:
        pytest.skip("compiled kernels not built")
    grid = np.stack(np.meshgrid(np.arange(6.0), np.arange(6.0)), -1).reshape(-1, 2)
    a = kernels.get_backend("cython").knn_table(grid, 4)
    b = kernels.get_backend("python").knn_table(grid, 4)
    assert np.array_equal(a, b)
