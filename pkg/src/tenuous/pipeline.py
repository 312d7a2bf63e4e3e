"""Composite runs used by the CLI: full pipeline, random baseline, timing bench."""

from __future__ import annotations

import csv
import platform
import statistics
import time
import zlib
from dataclasses import dataclass

import numpy as np

from . import __version__
from .datagen import GenSpec, generate, synthetic_spec
from .embed import Embedding, TrainConfig, aggregation_operator, train
from .graph import Graph
from .select import SelectConfig, Selection, SpatialIndex, find_subset
from .tenuity import TenuityReport, TenuousSubset, report

BENCH_PHASES = ("motif", "embed", "select", "eval")


def phase_seed(root: int, phase: str) -> int:
    """Deterministic per-phase seed derived from one root seed."""
    ss = np.random.SeedSequence([int(root), zlib.crc32(phase.encode())])
    return int(ss.generate_state(1)[0])


def versions() -> dict:
    import scipy
    import sklearn

    return {
        "tenuous": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


@dataclass
class PipelineResult:
    embedding: Embedding
    selection: Selection
    report: TenuityReport


def run_pipeline(g: Graph, train_cfg: TrainConfig, select_cfg: SelectConfig, k: int = 1,
                 x: np.ndarray | None = None) -> PipelineResult:
    z = train(g, x, aggregation_operator(g, train_cfg.mode), train_cfg)
    sel = find_subset(SpatialIndex(z.values), select_cfg)
    return PipelineResult(z, sel, report(g, sel.subset(k)))


def random_baseline(g: Graph, size_k: int, trials: int, seed: int, k: int = 1) -> dict:
    """|PF| statistics of ``trials`` uniformly drawn ``size_k``-subsets."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 1 <= size_k <= g.node_count:
        raise ValueError(f"infeasible size constraint: K={size_k}, N={g.node_count}")
    rng = np.random.default_rng(seed)
    pf = []
    for _ in range(trials):
        nodes = rng.choice(g.node_count, size=size_k, replace=False)
        pf.append(report(g, TenuousSubset(frozenset(nodes.tolist()), k)).pf_count)
    return {
        "size": size_k,
        "k": k,
        "trials": trials,
        "seed": seed,
        "pf_min": min(pf),
        "pf_median": float(statistics.median(pf)),
        "pf_max": max(pf),
        "pf_counts": pf,
    }


def bench_size_k(nodes: int, size: int | None, size_fraction: float) -> int:
    if size is not None:
        return min(size, nodes)
    return max(1, min(nodes, int(round(nodes * size_fraction))))


def run_bench(sizes, seed: int, train_cfg: TrainConfig, *, size: int | None = None,
              size_fraction: float = 0.05, strategy: str = "max", k: int = 1, reps: int = 3,
              gen_spec=synthetic_spec, log=None) -> list[dict]:
    """Median wall-clock seconds per phase and graph size.

    Each size gets one generated graph; every repetition reruns all four
    phases on it from the same seeds.
    """
    rows = []
    for n in sizes:
        spec: GenSpec = gen_spec(int(n), phase_seed(seed, f"gen-{n}"))
        g = generate(spec)
        size_k = bench_size_k(g.node_count, size, size_fraction)
        timings = {p: [] for p in BENCH_PHASES}
        for _ in range(reps):
            t0 = time.perf_counter()
            w = aggregation_operator(g, train_cfg.mode)
            t1 = time.perf_counter()
            z = train(g, None, w, train_cfg)
            t2 = time.perf_counter()
            sel = find_subset(SpatialIndex(z.values), SelectConfig(size_k, strategy))
            t3 = time.perf_counter()
            report(g, sel.subset(k))
            t4 = time.perf_counter()
            for p, dt in zip(BENCH_PHASES, (t1 - t0, t2 - t1, t3 - t2, t4 - t3)):
                timings[p].append(dt)
        for p in BENCH_PHASES:
            rows.append({
                "nodes": g.node_count,
                "edges": g.edge_count,
                "size_k": size_k,
                "phase": p,
                "median_seconds": statistics.median(timings[p]),
                "reps": reps,
            })
            if log:
                log(f"n={g.node_count} phase={p} median={rows[-1]['median_seconds']:.4f}s")
    return rows


BENCH_FIELDS = ["nodes", "edges", "size_k", "phase", "median_seconds", "reps"]


def write_bench_csv(rows: list[dict], fh) -> None:
    w = csv.DictWriter(fh, fieldnames=BENCH_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
