import itertools
import math

import numpy as np
from hypothesis import given, settings, strategies as st

from conftest import random_graph
from tenuous.graph import Graph
from tenuous.motif import agg_weights, identity_weights, motif_matrix, write_triplets


def triangle_oracle(g):
    n = g.node_count
    a = g.adjacency.toarray().astype(bool)
    m = np.zeros((n, n), dtype=np.int64)
    for i, j, k in itertools.combinations(range(n), 3):
        if a[i, j] and a[i, k] and a[j, k]:
            for x, y in ((i, j), (i, k), (j, k)):
                m[x, y] += 1
                m[y, x] += 1
    return m


def test_toy_counts(toy):
    m = motif_matrix(toy)
    assert m[2, 3] == 2 and m[3, 2] == 2
    assert m[1, 2] == 1


def test_tree_has_no_motifs():
    tree = Graph.from_edges(6, [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5)])
    assert motif_matrix(tree).nnz == 0


def test_toy_softmax_row(toy):
    alpha = agg_weights(motif_matrix(toy), toy).toarray()
    e = math.e
    assert math.isclose(alpha[2, 1], e / (2 * e + e * e), rel_tol=1e-12)
    assert math.isclose(alpha[2, 3], e * e / (2 * e + e * e), rel_tol=1e-12)
    assert math.isclose(alpha[2, 4], alpha[2, 1], rel_tol=1e-12)
    assert round(alpha[2, 1], 4) == 0.2119 and round(alpha[2, 3], 4) == 0.5761
    assert alpha[0, 0] == 1.0 and alpha[0].sum() == 1.0


def test_softmax_small_cases():
    pendant = Graph.from_edges(3, [(0, 1), (1, 2)])
    alpha = agg_weights(motif_matrix(pendant), pendant).toarray()
    assert alpha[0, 1] == 1.0
    assert alpha[1, 0] == alpha[1, 2] == 0.5


def test_softmax_large_counts_do_not_overflow():
    # book graph: spine 0-1 shared by 998 triangles, so exp(M) alone would overflow
    n = 1000
    g = Graph.from_edges(n, [(0, 1)] + [(s, p) for p in range(2, n) for s in (0, 1)])
    m = motif_matrix(g)
    assert m[0, 1] == n - 2
    alpha = agg_weights(m, g)
    assert np.all(np.isfinite(alpha.data))
    assert math.isclose(alpha[0, 1], 1.0 / (1.0 + (n - 2) * math.exp(-(n - 3))), rel_tol=1e-12)


def test_symnorm_examples(toy):
    assert identity_weights(Graph.from_edges(1, [])).toarray().tolist() == [[1.0]]
    assert np.allclose(identity_weights(Graph.from_edges(2, [(0, 1)])).toarray(), 0.5, rtol=0, atol=1e-15)
    assert math.isclose(identity_weights(toy)[2, 3], 0.25, rel_tol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 40), p=st.floats(0.0, 0.6))
def test_matches_triple_enumeration(seed, n, p):
    g = random_graph(np.random.default_rng(seed), n, p)
    m = motif_matrix(g)
    oracle = triangle_oracle(g)
    assert np.array_equal(m.toarray(), oracle)
    assert m.sum() == 6 * (oracle.sum() // 6)
    # entries only on edges, symmetric
    a = g.adjacency.toarray().astype(bool)
    assert not np.any(m.toarray()[~a])
    assert (m != m.T).nnz == 0

    alpha = agg_weights(m, g).toarray()
    assert np.all(np.diag(alpha) == 1.0)
    off = alpha - np.eye(n)
    assert np.all(off[~a] == 0)
    assert np.all((off[a] > 0) & (off[a] <= 1))
    deg = g.degrees()
    assert np.allclose(off.sum(axis=1)[deg > 0], 1.0, rtol=0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 25))
def test_permutation_equivariance(seed, n):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, 0.4)
    perm = rng.permutation(n)
    h = Graph.from_edges(n, [(perm[u], perm[v]) for u, v in g.edges()])
    mg, mh = motif_matrix(g).toarray(), motif_matrix(h).toarray()
    assert np.array_equal(mh[np.ix_(perm, perm)], mg)
    ag = agg_weights(motif_matrix(g), g).toarray()
    ah = agg_weights(motif_matrix(h), h).toarray()
    assert np.allclose(ah[np.ix_(perm, perm)], ag, rtol=0, atol=1e-15)


def test_write_triplets(toy, tmp_path):
    p = tmp_path / "m.txt"
    write_triplets(motif_matrix(toy), p)
    rows = [tuple(map(int, line.split())) for line in p.read_text().splitlines()]
    assert (2, 3, 2) in rows and (1, 2, 1) in rows
    assert len(rows) == 10
