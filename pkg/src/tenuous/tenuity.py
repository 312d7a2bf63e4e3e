"""Tenuity metrics: k-lines, k-triangles and potential-friend (PF) counts.

All distances are shortest-path distances in the full host graph, never in
the subgraph induced by the subset under evaluation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import combinations

from .graph import Graph, k_hop_set


@dataclass(frozen=True)
class TenuousSubset:
    nodes: frozenset[int]
    k: int = 1

    def __post_init__(self):
        object.__setattr__(self, "nodes", frozenset(int(u) for u in self.nodes))
        if not self.nodes:
            raise ValueError("subset must contain at least one node")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    def validate(self, g: Graph) -> None:
        for u in self.nodes:
            g.check_node(u)


@dataclass(frozen=True)
class PFSet:
    pairs: frozenset[tuple[int, int]]
    triples: frozenset[tuple[int, int, int]]

    def __len__(self) -> int:
        return len(self.pairs) + len(self.triples)


@dataclass(frozen=True)
class TenuityReport:
    k_line_count: int
    k_triangle_count: int
    pf_count: int
    pf_pairs: int
    pf_triples: int
    subset_size: int

    def to_dict(self) -> dict:
        return asdict(self)


def common_neighbors_k(g: Graph, u: int, v: int, k: int) -> set[int]:
    """Nodes of ``g`` (other than u, v) within ``k`` hops of both ``u`` and ``v``."""
    u, v = g.check_node(u), g.check_node(v)
    if u == v:
        raise ValueError("common neighbors need two distinct nodes")
    return (k_hop_set(g, u, k) & k_hop_set(g, v, k)) - {u, v}


def _balls(g: Graph, t: TenuousSubset) -> dict[int, set[int]]:
    t.validate(g)
    return {u: k_hop_set(g, u, t.k) for u in t.nodes}


def _close_pairs(balls: dict[int, set[int]]) -> set[tuple[int, int]]:
    return {(u, v) for u, ball in balls.items() for v in ball if u < v and v in balls}


def pf_set(g: Graph, t: TenuousSubset) -> PFSet:
    return _pf_from_balls(_balls(g, t))


def _pf_from_balls(balls: dict[int, set[int]]) -> PFSet:
    pairs = _close_pairs(balls)
    # invert the balls: witness w -> subset members within k of w;
    # every pair of members sharing a witness yields one triple
    witnesses: dict[int, list[int]] = {}
    for u, ball in balls.items():
        for w in ball:
            witnesses.setdefault(w, []).append(u)
    triples = set()
    for w, members in witnesses.items():
        if len(members) < 2:
            continue
        for u, v in combinations(members, 2):
            triples.add(tuple(sorted((u, v, w))))
    return PFSet(frozenset(pairs), frozenset(triples))


def count_k_lines(g: Graph, t: TenuousSubset) -> int:
    return len(_close_pairs(_balls(g, t)))


def _count_triangles(balls: dict[int, set[int]]) -> int:
    inner = {u: ball & balls.keys() for u, ball in balls.items()}
    total = 0
    for u, nu in inner.items():
        for v in nu:
            if v > u:
                total += sum(1 for w in inner[v] & nu if w > v)
    return total


def count_k_triangles(g: Graph, t: TenuousSubset) -> int:
    """Triples inside ``t`` whose three pairwise distances are all within k."""
    return _count_triangles(_balls(g, t))


def report(g: Graph, t: TenuousSubset) -> TenuityReport:
    balls = _balls(g, t)
    pf = _pf_from_balls(balls)
    tri = _count_triangles(balls)
    return TenuityReport(
        k_line_count=len(pf.pairs),
        k_triangle_count=tri,
        pf_count=len(pf),
        pf_pairs=len(pf.pairs),
        pf_triples=len(pf.triples),
        subset_size=len(t.nodes),
    )
