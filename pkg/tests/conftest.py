import itertools

import numpy as np
import pytest

from tenuous.graph import Graph

# the 4-node motif example: two triangles {1,2,3} and {2,3,4} sharing edge 2-3; id 0 is padding
TOY_EDGES = [(1, 2), (1, 3), (2, 3), (2, 4), (3, 4)]


@pytest.fixture
def toy():
    return Graph.from_edges(5, TOY_EDGES)


def random_graph(rng, n, p):
    edges = [(u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < p]
    return Graph.from_edges(n, edges)


def distance_matrix(g):
    """All-pairs hop distances via boolean adjacency powers (inf when unreachable)."""
    n = g.node_count
    a = np.zeros((n, n), dtype=bool)
    for u, v in g.edges():
        a[u, v] = a[v, u] = True
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0)
    reach = np.eye(n, dtype=bool)
    for step in range(1, n):
        nxt = reach | ((reach.astype(np.int64) @ a.astype(np.int64)) > 0)
        dist[nxt & ~reach] = step
        if (nxt == reach).all():
            break
        reach = nxt
    return dist
