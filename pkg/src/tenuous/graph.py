"""Undirected simple graphs in compressed adjacency form, plus bounded-depth
distance queries."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


class EdgeListError(ValueError):
    """Malformed edge-list input."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected graph stored as CSR arrays.

    ``indices[indptr[u]:indptr[u + 1]]`` is the sorted, duplicate-free
    neighbor list of ``u``. ``labels`` holds the original file ids when the
    loader had to compact a sparse id space, otherwise ``None``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    labels: np.ndarray | None = field(default=None)

    @classmethod
    def from_edges(cls, n: int, edges, labels=None) -> "Graph":
        """Build from an iterable/array of (u, v) pairs; drops loops and duplicates."""
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError(f"edge endpoint out of range for n={n}")
        e = e[e[:, 0] != e[:, 1]]
        both = np.concatenate([e, e[:, ::-1]])
        if both.size:
            both = np.unique(both, axis=0)
        rows, cols = both[:, 0], both[:, 1]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        # np.unique sorted lexicographically, so each row slice is already sorted
        return cls(indptr, cols.astype(np.int64), labels)

    @property
    def node_count(self) -> int:
        return len(self.indptr) - 1

    @property
    def edge_count(self) -> int:
        return len(self.indices) // 2

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edges(self) -> np.ndarray:
        """(|E|, 2) array of edges with u < v, lexicographically sorted."""
        rows = np.repeat(np.arange(self.node_count), self.degrees())
        mask = rows < self.indices
        return np.column_stack([rows[mask], self.indices[mask]])

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        n = self.node_count
        data = np.ones(len(self.indices), dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(n, n))

    @cached_property
    def neighbor_sets(self) -> list[frozenset[int]]:
        return [frozenset(self.neighbors(u).tolist()) for u in range(self.node_count)]

    def check_node(self, u: int) -> int:
        u = int(u)
        if not 0 <= u < self.node_count:
            raise IndexError(f"node id {u} out of range [0, {self.node_count})")
        return u


def load_edge_list(path: str | Path) -> Graph:
    """Read a whitespace-separated edge list.

    Lines starting with ``#`` and blank lines are skipped. Ids are padded
    into ``range(max_id + 1)`` unless that would more than double the node
    count, in which case they are compacted and the originals kept in
    ``Graph.labels``.
    """
    pairs: list[tuple[int, int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if len(toks) != 2:
                raise EdgeListError(f"{path}:{lineno}: expected two node ids, got {line!r}")
            try:
                u, v = int(toks[0]), int(toks[1])
            except ValueError:
                raise EdgeListError(f"{path}:{lineno}: non-integer token in {line!r}") from None
            if u < 0 or v < 0:
                raise EdgeListError(f"{path}:{lineno}: negative node id in {line!r}")
            pairs.append((u, v))

    if not pairs:
        return Graph.from_edges(0, [])

    e = np.array(pairs, dtype=np.int64)
    loops = int(np.count_nonzero(e[:, 0] == e[:, 1]))
    ids = np.unique(e)
    max_id = int(ids[-1])
    labels = None
    if max_id + 1 > 2 * len(ids):
        labels = ids
        e = np.searchsorted(ids, e)
        n = len(ids)
    else:
        n = max_id + 1
    g = Graph.from_edges(n, e, labels)
    dups = len(pairs) - loops - g.edge_count
    if loops or dups:
        log.info("%s: dropped %d self-loops and %d duplicate edges", path, loops, dups)
    return g


def write_edge_list(g: Graph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes={g.node_count} edges={g.edge_count}\n")
        for u, v in g.edges():
            fh.write(f"{u} {v}\n")


def k_hop_set(g: Graph, u: int, k: int) -> set[int]:
    """Nodes other than ``u`` within ``k`` hops of ``u`` (BFS cut at depth k)."""
    u = g.check_node(u)
    if k < 1:
        raise ValueError("k must be >= 1")
    seen = {u}
    frontier = [u]
    for _ in range(k):
        nxt = []
        for x in frontier:
            for y in g.neighbor_sets[x]:
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
        if not nxt:
            break
        frontier = nxt
    seen.discard(u)
    return seen


def within_k(g: Graph, u: int, v: int, k: int) -> bool:
    """True iff the shortest distance between ``u`` and ``v`` in ``g`` is at most ``k``."""
    u, v = g.check_node(u), g.check_node(v)
    if u == v:
        return True
    if k < 1:
        raise ValueError("k must be >= 1")
    # bidirectional: expand the smaller frontier until the searches meet
    dist_u, dist_v = {u: 0}, {v: 0}
    qu, qv = deque([u]), deque([v])
    du = dv = 0
    while du + dv < k and qu and qv:
        if len(qu) <= len(qv):
            q, dist, other, du = qu, dist_u, dist_v, du + 1
            depth = du
        else:
            q, dist, other, dv = qv, dist_v, dist_u, dv + 1
            depth = dv
        for _ in range(len(q)):
            x = q.popleft()
            for y in g.neighbor_sets[x]:
                if y in other:
                    return True
                if y not in dist:
                    dist[y] = depth
                    q.append(y)
    return False


def load_features(path: str | Path, n: int) -> np.ndarray:
    """Dense feature matrix from ``.npy`` or delimited text (one row per node)."""
    path = Path(path)
    if path.suffix == ".npy":
        x = np.load(path)
    else:
        x = np.loadtxt(path, delimiter="," if path.suffix == ".csv" else None, ndmin=2)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != n:
        raise ValueError(f"feature matrix has shape {x.shape}, expected ({n}, D)")
    if not np.all(np.isfinite(x)):
        raise ValueError("feature matrix contains non-finite values")
    return x
