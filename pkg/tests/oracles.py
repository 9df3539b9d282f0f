"""Brute-force reference implementations used by the tests."""
from collections import deque

import numpy as np


def rgg_edges(points, r):
    n = len(points)
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(-1)
    i, j = np.nonzero(np.triu(d2 <= r * r, k=1))
    return {(int(a), int(b)) for a, b in zip(i, j)}


def knn_edges(points, k):
    n = len(points)
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(-1)
    out = set()
    for i in range(n):
        cand = sorted((d2[i, j], j) for j in range(n) if j != i)[:k]
        for _, j in cand:
            out.add((min(i, j), max(i, j)))
    return out


def bfs_components(n, edges):
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    label = [-1] * n
    for s in range(n):
        if label[s] >= 0:
            continue
        q = deque([s])
        label[s] = s
        while q:
            u = q.popleft()
            for v in adj[u]:
                if label[v] < 0:
                    label[v] = s
                    q.append(v)
    return np.array(label)


def shoelace(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
