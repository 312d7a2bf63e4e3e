"""Tenuous subgraph finding with motif-weighted graph autoencoder embeddings."""

from .graph import Graph, k_hop_set, load_edge_list, within_k, write_edge_list
from .tenuity import (
    TenuityReport,
    TenuousSubset,
    common_neighbors_k,
    count_k_lines,
    count_k_triangles,
    pf_set,
    report,
)

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "TenuityReport",
    "TenuousSubset",
    "common_neighbors_k",
    "count_k_lines",
    "count_k_triangles",
    "k_hop_set",
    "load_edge_list",
    "pf_set",
    "report",
    "within_k",
    "write_edge_list",
]
