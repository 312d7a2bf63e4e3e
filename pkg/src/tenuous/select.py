"""Greedy density-based tenuous subset selection in embedding space."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree
from sklearn.neighbors import KDTree

from .tenuity import TenuousSubset

log = logging.getLogger(__name__)

STRATEGIES = ("max", "min")
# relative slack used to bracket the tree's float comparisons;
# anything inside the bracket is re-checked with euclidean()
_SLACK = 1e-9
_SAMPLE = 1000
_GROWTH = 1.25
# max eps-pairs materialized at once before falling back to subtree counting
_PAIR_BUDGET = 25_000_000
_LOOKAHEAD = _GROWTH
_TREE_MAX_DIM = 8
# above this fraction of all pairs, a blocked scan beats the tree in high dimension
_BLOCK_ELEMS = 2_000_000
# margin, relative to the largest squared norm, over the float32 error of |a|^2 + |b|^2 - 2 a.b
_GRAM_TOL = 1e-5


class InfeasibleSizeError(ValueError):
    pass


def euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance between rows of ``a`` and ``b`` (broadcasting).

    Squares are accumulated one coordinate at a time, so the result for a
    given pair does not depend on the shape of the batch it was computed in.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    acc = np.zeros(np.broadcast_shapes(a.shape[:-1], b.shape[:-1]))
    for d in range(a.shape[-1]):
        diff = a[..., d] - b[..., d]
        acc += diff * diff
    return np.sqrt(acc)


@dataclass(frozen=True)
class EpsGraph:
    """Neighbor counts at one radius plus on-demand neighbor lists."""

    counts: np.ndarray
    _cache: "_PairCache"
    _m: int

    def neighbors(self, u: int) -> np.ndarray:
        c = self._cache
        lo, hi = c.indptr[u], c.indptr[u + 1]
        return c.cols[lo:hi][c.rank[lo:hi] < self._m]


class _PairCache:
    """All pairs within ``radius``, sorted by distance, plus per-node lists
    holding each pair's rank in that order.

    Counting at a smaller radius then only touches the pairs inside it.
    """

    def __init__(self, n: int, u: np.ndarray, v: np.ndarray, dist: np.ndarray, radius: float):
        self.radius = radius
        order = np.argsort(dist, kind="stable")
        self.sorted_dist = dist[order]
        self.sorted_u = u[order]
        self.sorted_v = v[order]
        del order
        m = len(dist)
        # rank is shifted by one so no stored value is an explicit zero
        rank = np.arange(1, m + 1, dtype=np.int64 if m >= 2**31 - 1 else np.int32)
        csr = sp.csr_matrix(
            (np.concatenate([rank, rank]),
             (np.concatenate([self.sorted_u, self.sorted_v]), np.concatenate([self.sorted_v, self.sorted_u]))),
            shape=(n, n))
        self.indptr = csr.indptr
        self.cols = csr.indices
        self.rank = csr.data
        self.rank -= 1

    def at(self, eps: float) -> EpsGraph:
        n = len(self.indptr) - 1
        m = int(np.searchsorted(self.sorted_dist, eps, side="right"))
        counts = np.bincount(self.sorted_u[:m], minlength=n) + np.bincount(self.sorted_v[:m], minlength=n)
        return EpsGraph(counts.astype(np.int64), self, m)


class SpatialIndex:
    """Exact Euclidean range queries over the rows of an embedding matrix.

    Candidate sets come from kd-trees queried at a slightly inflated radius
    and are then filtered with :func:`euclidean`, so results never depend on
    the trees' internal rounding.
    """

    def __init__(self, points, leaf_size: int = 16):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError("points must be a 2-D array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        self.points = pts
        self.leaf_size = leaf_size
        # in high dimension kd-trees only pay off for small radii
        self.high_dim = pts.shape[1] > _TREE_MAX_DIM
        self.tree = cKDTree(pts, leafsize=leaf_size) if len(pts) else None
        self._count_tree = None
        self._sample_d = None
        self._centered = None
        self._cache: _PairCache | None = None
        # every pair is within twice the largest distance from the centroid
        self.diameter_bound = (
            2.0 * float(euclidean(pts, pts.mean(axis=0)).max()) * (1.0 + _SLACK) if len(pts) else 0.0)

    def __len__(self) -> int:
        return len(self.points)

    def _check(self, u: int) -> int:
        u = int(u)
        if not 0 <= u < len(self.points):
            raise IndexError(f"node id {u} out of range [0, {len(self.points)})")
        return u

    @staticmethod
    def _hi(eps: float) -> float:
        return eps * (1.0 + _SLACK) + np.finfo(float).tiny

    def neighbors(self, u: int, eps: float) -> np.ndarray:
        """Sorted ids ``v != u`` with ``euclidean(z_u, z_v) <= eps``."""
        u = self._check(u)
        if eps < 0:
            raise ValueError("eps must be >= 0")
        if self.high_dim:
            cand = np.flatnonzero(euclidean(self.points, self.points[u]) <= eps)
        else:
            cand = np.asarray(self.tree.query_ball_point(self.points[u], self._hi(eps)), dtype=np.int64)
            cand = cand[euclidean(self.points[cand], self.points[u]) <= eps]
        return np.sort(cand[cand != u])

    def sample_distances(self) -> np.ndarray:
        """Sorted pairwise distances among up to 1000 evenly spaced points."""
        if self._sample_d is None:
            pts = self.points[_sample_ids(len(self))]
            iu = np.triu_indices(len(pts), 1)
            rows = [euclidean(pts[s:s + 250, None, :], pts[None, :, :]) for s in range(0, len(pts), 250)]
            full = np.vstack(rows) if rows else np.zeros((0, 0))
            self._sample_d = np.sort(full[iu])
        return self._sample_d

    def expected_pairs(self, eps: float) -> float:
        """Estimated number of unordered pairs within ``eps``, scaled up from the sample."""
        d = self.sample_distances()
        n = len(self)
        if len(d) == 0:
            return 0.0
        frac = np.searchsorted(d, self._hi(eps), side="right") / len(d)
        return frac * n * (n - 1) / 2

    def nearest_distances(self, ids) -> np.ndarray:
        """Distance from each point in ``ids`` to its nearest point at a nonzero distance."""
        ids = np.asarray(ids, dtype=np.int64)
        if len(self) < 2 or len(ids) == 0:
            return np.zeros(len(ids))
        if not self.high_dim:
            # a few extra neighbors step past coincident points
            k = min(len(self), 8)
            d = self.tree.query(self.points[ids], k=k)[0]
            d = np.where(d > 0, d, np.inf).min(axis=1)
            return d
        pts = self.points
        sq = np.einsum("ij,ij->i", pts, pts)
        out = np.empty(len(ids))
        block = max(1, _BLOCK_ELEMS // len(pts))
        for s in range(0, len(ids), block):
            rows = ids[s:s + block]
            d2 = sq[rows, None] + sq[None, :] - 2.0 * (pts[rows] @ pts.T)
            # treat (near-)coincident points, including the point itself, as absent
            d2[d2 <= 1e-12 * (sq[rows, None] + sq[None, :])] = np.inf
            out[s:s + block] = np.sqrt(d2.min(axis=1))
        return out

    def pairs(self, eps: float) -> np.ndarray:
        """(m, 2) array of all pairs ``i < j`` with ``euclidean(z_i, z_j) <= eps``."""
        if eps < 0:
            raise ValueError("eps must be >= 0")
        if len(self) < 2:
            return np.zeros((0, 2), dtype=np.int64)
        if self.high_dim:
            found = list(self._scan(eps))
            if not found:
                return np.zeros((0, 2), dtype=np.int64)
            return np.column_stack([np.concatenate([r for r, _ in found]),
                                    np.concatenate([c for _, c in found])])
        p = self.tree.query_pairs(self._hi(eps), output_type="ndarray").astype(np.int64)
        keep = self._pair_distances(p[:, 0], p[:, 1]) <= eps
        return p[keep]

    def _scan(self, eps: float):
        """Blocked brute-force scan yielding (rows, cols) with rows < cols within eps.

        A float32 matrix product over centered points proposes candidates with
        a margin well above its rounding error; candidates are then confirmed
        with :func:`euclidean` on the original coordinates.
        """
        if self._centered is None:
            c = self.points - self.points.mean(axis=0)
            sq = np.einsum("ij,ij->i", c, c)
            self._centered = (c.astype(np.float32), sq.astype(np.float32), float(sq.max()))
        c32, sq32, sq_max = self._centered
        n = len(c32)
        margin = _GRAM_TOL * sq_max + 1e-30
        # candidate iff |c_j|^2 - 2 c_i.c_j <= eps^2 + margin - |c_i|^2
        thresh = (eps * eps + margin - sq32.astype(np.float64)).astype(np.float32)
        block = max(1, _BLOCK_ELEMS // n)
        for s in range(0, n, block):
            e = min(n, s + block)
            g = c32[s:e] @ c32[s:].T
            g *= np.float32(-2.0)
            g += sq32[None, s:]
            r, col = np.nonzero(g <= thresh[s:e, None])
            r = (r + s).astype(np.int32 if n < 2**31 else np.int64)
            col = (col + s).astype(r.dtype)
            keep = col > r
            r, col = r[keep], col[keep]
            ok = self._pair_distances(r, col) <= eps
            yield r[ok], col[ok]

    def _pair_distances(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty(len(u))
        step = max(1, _BLOCK_ELEMS // max(self.points.shape[1], 1))
        for s in range(0, len(u), step):
            out[s:s + step] = euclidean(self.points[u[s:s + step]], self.points[v[s:s + step]])
        return out

    def _budget_radius(self) -> float:
        """Radius whose estimated pair count is half the pair budget."""
        d = self.sample_distances()
        n = len(self)
        if len(d) == 0:
            return 0.0
        q = 0.5 * _PAIR_BUDGET / max(n * (n - 1) / 2, 1)
        return float(d[min(len(d) - 1, int(q * len(d)))])

    def epsilon_graph(self, eps: float) -> "EpsGraph | None":
        """The eps-neighbor relation, or ``None`` when the estimated pair count
        exceeds the memory budget.

        Pairs are cached for the largest radius computed so far, so smaller
        radii are answered from the cache. In high dimension every scan costs
        the same regardless of radius, so the first scan already goes out to
        the budget radius.
        """
        n = len(self)
        if eps < 0:
            raise ValueError("eps must be >= 0")
        if self._cache is None or eps > self._cache.radius:
            radius = eps
            if eps >= self.diameter_bound:
                if n * (n - 1) > 2 * _PAIR_BUDGET:
                    return None
                p = np.column_stack(np.triu_indices(n, 1))
            elif n and self.expected_pairs(eps) > _PAIR_BUDGET:
                return None
            else:
                if self.high_dim:
                    # scans cost the same at any radius: look a few growth steps ahead
                    radius = max(eps, min(eps * _LOOKAHEAD, self._budget_radius()))
                p = self.pairs(radius)
            idx_t = np.int32 if n < 2**31 else np.int64
            u, v = p[:, 0].astype(idx_t), p[:, 1].astype(idx_t)
            del p
            self._cache = None
            self._cache = _PairCache(n, u, v, self._pair_distances(u, v), radius)
        return self._cache.at(eps)

    def neighbor_counts(self, eps: float) -> np.ndarray:
        """``|neighbors(u, eps)|`` for every ``u``."""
        if eps < 0:
            raise ValueError("eps must be >= 0")
        n = len(self.points)
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        if eps >= self.diameter_bound:
            return np.full(n, n - 1, dtype=np.int64)
        if self._cache is not None and eps <= self._cache.radius:
            return self._cache.at(eps).counts
        if self.expected_pairs(eps) <= _PAIR_BUDGET:
            p = self.pairs(eps)
            return np.bincount(p.ravel(), minlength=n).astype(np.int64)
        if self.high_dim:
            counts = np.zeros(n, dtype=np.int64)
            for rows, cols in self._scan(eps):
                counts += np.bincount(rows, minlength=n)
                counts += np.bincount(cols, minlength=n)
            return counts
        return self._subtree_counts(eps)

    def _subtree_counts(self, eps: float) -> np.ndarray:
        # large radii: count whole subtrees that fall inside the ball instead
        # of enumerating pairs; brackets the tree's rounding with lo/hi radii
        if self._count_tree is None:
            self._count_tree = KDTree(self.points, leaf_size=40)
        tree = self._count_tree
        lo = tree.query_radius(self.points, eps * (1.0 - _SLACK), count_only=True)
        hi = tree.query_radius(self.points, self._hi(eps), count_only=True)
        counts = hi.astype(np.int64)
        for u in np.flatnonzero(lo != hi):
            counts[u] = len(self.neighbors(u, eps)) + 1
        return counts - 1  # self is always within eps


def _sample_ids(n: int) -> np.ndarray:
    return np.linspace(0, n - 1, min(n, _SAMPLE)).astype(np.int64)


def eps_neighbors(idx: SpatialIndex, u: int, eps: float) -> set[int]:
    return set(idx.neighbors(u, eps).tolist())


def density(idx: SpatialIndex, u: int, eps: float) -> float:
    return len(idx.neighbors(u, eps)) / len(idx)


def count_eps_pairs(idx: SpatialIndex, t, eps: float) -> int:
    """Unordered pairs of ``t`` at embedding distance <= eps."""
    ids = np.fromiter((idx._check(u) for u in t), dtype=np.int64)
    ids = np.unique(ids)
    total = 0
    pts = idx.points
    # row blocks keep the temporary at most block x |t|
    block = max(1, 4_000_000 // max(len(ids), 1))
    for start in range(0, len(ids), block):
        rows = ids[start:start + block]
        d = euclidean(pts[rows][:, None, :], pts[ids][None, :, :])
        close = d <= eps
        # keep j > i only
        close &= ids[None, :] > rows[:, None]
        total += int(close.sum())
    return total


def greedy_select(idx: SpatialIndex, eps: float, strategy: str = "max") -> list[int]:
    """Pick nodes by density order, deleting each pick's eps-neighbors.

    Densities are computed once against the full point set; ties go to the
    lowest node id.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    n = len(idx)
    if n == 0:
        return []
    if eps >= idx.diameter_bound:
        # everything is everyone's neighbor; all densities tie
        return [0]
    nbrs = idx.epsilon_graph(eps)
    if nbrs is not None:
        counts = nbrs.counts
    else:
        counts = idx.neighbor_counts(eps)
    key = -counts if strategy == "max" else counts
    order = np.lexsort((np.arange(n), key))
    removed = np.zeros(n, dtype=bool)
    picked = []
    for u in order:
        if removed[u]:
            continue
        picked.append(int(u))
        removed[u] = True
        if not counts[u]:
            continue
        if nbrs is not None:
            removed[nbrs.neighbors(u)] = True
        else:
            removed[idx.neighbors(u, eps)] = True
    return sorted(picked)


@dataclass
class SelectConfig:
    size_k: int
    strategy: str = "max"
    epsilon: float | str = "auto"
    binary_search_iters: int = 30

    def __post_init__(self):
        if self.size_k < 1:
            raise ValueError("size_k must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.epsilon != "auto" and not float(self.epsilon) >= 0:
            raise ValueError("epsilon must be 'auto' or a non-negative number")
        if self.binary_search_iters < 0:
            raise ValueError("binary_search_iters must be >= 0")


@dataclass
class Selection:
    nodes: list[int]
    epsilon: float
    strategy: str
    probes: int = 0

    def subset(self, k: int = 1) -> TenuousSubset:
        return TenuousSubset(frozenset(self.nodes), k)

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "strategy": self.strategy, "nodes": list(self.nodes)}


def upper_epsilon(idx: SpatialIndex) -> float:
    """Twice the largest pairwise distance among (up to) 1000 evenly spaced points."""
    d = idx.sample_distances()
    return 2.0 * float(d[-1]) if len(d) else 0.0


def _start_epsilon(idx: SpatialIndex) -> float:
    """Median nearest-neighbor distance (within the full set) of the sampled points."""
    nn = idx.nearest_distances(_sample_ids(len(idx)))
    nn = nn[np.isfinite(nn) & (nn > 0)]
    return float(np.median(nn)) if len(nn) else 0.0


def find_subset(idx: SpatialIndex, cfg: SelectConfig) -> Selection:
    """Largest eps whose greedy selection still has at least ``size_k`` nodes.

    The bracket ``[0, upper_epsilon]`` is first narrowed by a geometric scan
    upward from the typical nearest-neighbor spacing, so no probe lands far
    above the answer (large radii make exact density counting quadratic).
    ``binary_search_iters`` bisection steps then run inside that bracket.
    With a fixed ``cfg.epsilon`` a single greedy pass is run instead.
    """
    n = len(idx)
    if cfg.size_k > n:
        raise InfeasibleSizeError(f"infeasible size constraint: K={cfg.size_k} > N={n}")
    k = cfg.size_k

    def probe(eps):
        nonlocal probes
        probes += 1
        return greedy_select(idx, eps, cfg.strategy)

    probes = 0
    if cfg.epsilon != "auto":
        eps = float(cfg.epsilon)
        nodes = probe(eps)
        if len(nodes) < k:
            raise InfeasibleSizeError(
                f"infeasible size constraint: eps={eps} yields {len(nodes)} < K={k} nodes")
        return Selection(nodes, eps, cfg.strategy, probes)

    hi = upper_epsilon(idx)
    top = probe(hi)
    if len(top) >= k:
        return Selection(top, hi, cfg.strategy, probes)

    lo = 0.0
    best = probe(lo)
    if len(best) < k:
        # coincident points collapse even at eps = 0; pad in id order
        log.warning("eps=0 yields only %d nodes (duplicate embeddings); padding to K=%d", len(best), k)
        chosen = set(best)
        extra = [u for u in range(n) if u not in chosen][: k - len(best)]
        return Selection(sorted(best + extra), 0.0, cfg.strategy, probes)
    best_eps = lo

    eps = _start_epsilon(idx)
    while 0.0 < eps < hi:
        nodes = probe(eps)
        if len(nodes) < k:
            hi = eps
            break
        lo, best, best_eps = eps, nodes, eps
        eps *= _GROWTH

    for _ in range(cfg.binary_search_iters):
        mid = 0.5 * (lo + hi)
        nodes = probe(mid)
        if len(nodes) >= k:
            lo = mid
            if mid > best_eps:
                best, best_eps = nodes, mid
        else:
            hi = mid
    return Selection(best, best_eps, cfg.strategy, probes)


def write_selection(sel: Selection, path: str | Path) -> None:
    Path(path).write_text(json.dumps(sel.to_dict(), indent=2) + "\n", encoding="utf-8")


def read_subset_nodes(path: str | Path) -> list[int]:
    """Node ids from a subset JSON file (``{"nodes": [...]}``) or a bare JSON list."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    nodes = data["nodes"] if isinstance(data, dict) else data
    return [int(u) for u in nodes]
