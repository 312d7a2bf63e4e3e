"""Degree-capped uniform random graphs for the synthetic benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph


class InfeasibleSpecError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenSpec:
    nodes: int
    target_avg_degree: float
    max_degree: int
    seed: int = 0

    def __post_init__(self):
        if self.nodes < 2:
            raise ValueError("nodes must be >= 2")
        if not 0 < self.target_avg_degree <= self.max_degree:
            raise ValueError("need 0 < target_avg_degree <= max_degree")

    @property
    def target_edges(self) -> int:
        return int(round(self.nodes * self.target_avg_degree / 2))


# (nodes, avg degree, max degree) rows of the efficiency benchmark profile
SYNTHETIC_PROFILES = {
    1000: (2.746, 5),
    5000: (2.750, 5),
    10000: (3.351, 5),
    50000: (2.764, 5),
    100000: (3.360, 5),
}


def synthetic_spec(nodes: int, seed: int = 0) -> GenSpec:
    """Generator settings for a benchmark size; sizes not in the table use the 1000-node profile."""
    avg, cap = SYNTHETIC_PROFILES.get(nodes, SYNTHETIC_PROFILES[1000])
    return GenSpec(nodes, avg, cap, seed)


def generate(spec: GenSpec) -> Graph:
    """Uniform edge proposals, rejected when they would duplicate an edge,
    close a loop, or push an endpoint past ``max_degree``."""
    n, cap = spec.nodes, spec.max_degree
    target = spec.target_edges
    budget = 50 * target
    rng = np.random.default_rng(spec.seed)
    deg = np.zeros(n, dtype=np.int64)
    seen: set[int] = set()
    edges: list[tuple[int, int]] = []
    used = 0
    while len(edges) < target and used < budget:
        batch = rng.integers(0, n, size=(min(budget - used, 4 * (target - len(edges)) + 64), 2))
        for u, v in batch.tolist():
            used += 1
            if u == v or deg[u] >= cap or deg[v] >= cap:
                continue
            if u > v:
                u, v = v, u
            key = u * n + v
            if key in seen:
                continue
            seen.add(key)
            edges.append((u, v))
            deg[u] += 1
            deg[v] += 1
            if len(edges) == target:
                break
    if len(edges) < 0.9 * target:
        raise InfeasibleSpecError(
            f"proposal budget exhausted: {len(edges)}/{target} edges "
            f"(avg degree {2 * len(edges) / n:.3f}, max degree {int(deg.max())})")
    return Graph.from_edges(n, edges)
