"""Vertex inclusion probabilities for node-wise sampled GNN training on partitioned graphs."""

from .commsim import AccessTrace, CommReport, collect_trace, h2d_volume, simulate, sweep
from .graph import (Graph, VertexRoles, generate_synthetic, load_edge_list, random_roles,
                    read_binary_csr, write_binary_csr)
from .partition import PartitionMap, partition_graph
from .pipesim import BatchCost, ClusterConfig, costs_from_trace, simulate_pipeline
from .policies import (CachePlan, Ranking, build_cache, rank_degree, rank_halo_1hop, rank_numpaths,
                       rank_oracle, rank_sim, rank_vip, rank_wpr)
from .reorder import ReorderMap, apply_reorder, build_reorder
from .sampling import ExpandedNeighborhood, SeedSpec, epoch_minibatches, expand, sample_neighbors
from .vip import TransitionModel, VipScores, empirical_vip, initial_probs, propagate

__all__ = [
    "AccessTrace",
    "CommReport",
    "collect_trace",
    "h2d_volume",
    "simulate",
    "sweep",
    "Graph",
    "VertexRoles",
    "generate_synthetic",
    "load_edge_list",
    "random_roles",
    "read_binary_csr",
    "write_binary_csr",
    "PartitionMap",
    "partition_graph",
    "BatchCost",
    "ClusterConfig",
    "costs_from_trace",
    "simulate_pipeline",
    "CachePlan",
    "Ranking",
    "build_cache",
    "rank_degree",
    "rank_halo_1hop",
    "rank_numpaths",
    "rank_oracle",
    "rank_sim",
    "rank_vip",
    "rank_wpr",
    "ReorderMap",
    "apply_reorder",
    "build_reorder",
    "ExpandedNeighborhood",
    "SeedSpec",
    "epoch_minibatches",
    "expand",
    "sample_neighbors",
    "TransitionModel",
    "VipScores",
    "empirical_vip",
    "initial_probs",
    "propagate",
]

__version__ = "0.1.0"
