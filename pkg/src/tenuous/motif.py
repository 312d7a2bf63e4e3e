"""Triangle-motif edge support and the aggregation weights derived from it."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import Graph


def edge_support(g: Graph) -> np.ndarray:
    """Triangle count of every stored adjacency entry, aligned with ``g.indices``."""
    nbrs = g.neighbor_sets
    out = np.zeros(len(g.indices), dtype=np.int64)
    for u in range(g.node_count):
        lo, hi = g.indptr[u], g.indptr[u + 1]
        nu = nbrs[u]
        for pos in range(lo, hi):
            v = int(g.indices[pos])
            if v > u:
                out[pos] = len(nu & nbrs[v])
    # mirror the upper-triangle counts onto (v, u)
    rows = np.repeat(np.arange(g.node_count), g.degrees())
    upper = rows < g.indices
    key = rows * g.node_count + g.indices
    mirror = g.indices * g.node_count + rows
    where = np.searchsorted(key, mirror[upper])
    out[where] = out[upper]
    return out


def motif_matrix(g: Graph) -> sp.csr_matrix:
    """Sparse symmetric matrix M with M[i, j] = #triangles through edge (i, j)."""
    n = g.node_count
    m = sp.csr_matrix((edge_support(g), g.indices.copy(), g.indptr.copy()), shape=(n, n))
    m.eliminate_zeros()
    return m


def _support_on_graph(m: sp.csr_matrix, g: Graph) -> np.ndarray:
    if len(g.indices) == 0:
        return np.zeros(0)
    rows = np.repeat(np.arange(g.node_count), g.degrees())
    return np.asarray(m[rows, g.indices], dtype=np.float64).ravel()


def agg_weights(m: sp.csr_matrix, g: Graph) -> sp.csr_matrix:
    """Row-softmax of motif counts over each neighborhood, plus the identity.

    Rows therefore sum to 2 for every non-isolated node and to 1 for an
    isolated one.
    """
    n = g.node_count
    vals = _support_on_graph(m, g)
    deg = g.degrees()
    rows = np.repeat(np.arange(n), deg)
    nz = deg > 0
    rowmax = np.zeros(n)
    if vals.size:
        rowmax[nz] = np.maximum.reduceat(vals, g.indptr[:-1][nz])
    ex = np.exp(vals - rowmax[rows])
    denom = np.bincount(rows, weights=ex, minlength=n)
    alpha = sp.csr_matrix((ex / denom[rows], g.indices.copy(), g.indptr.copy()), shape=(n, n))
    return (alpha + sp.identity(n, format="csr")).tocsr()


def identity_weights(g: Graph) -> sp.csr_matrix:
    """Symmetric renormalized adjacency D^-1/2 (A + I) D^-1/2 with D the degrees of A + I."""
    n = g.node_count
    a = g.adjacency + sp.identity(n, format="csr")
    d = np.asarray(a.sum(axis=1)).ravel()
    s = sp.diags(1.0 / np.sqrt(d))
    return (s @ a @ s).tocsr()


def write_triplets(m: sp.csr_matrix, path: str | Path) -> None:
    coo = m.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        for i, j, c in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {int(c)}\n")
