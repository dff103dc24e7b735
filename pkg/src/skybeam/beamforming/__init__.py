"""Beamformers: the trained GNN and the non-learned baselines."""

from .baselines import (
    CemBeamformer,
    MrtBeamformer,
    OracleConfig,
    RandomBeamformer,
    cem_oracle,
    mrt,
    project_power,
    random_precoder,
)
from .gnn import (
    GnnBeamformer,
    GnnParams,
    GraphBatch,
    GraphGroup,
    batch_mean_rate,
    build_features,
    build_graph_batch,
    gnn_forward_groups,
    gnn_loss,
    table_i_preset,
)

__all__ = [
    "GnnBeamformer", "GnnParams", "GraphBatch", "GraphGroup",
    "build_features", "build_graph_batch", "gnn_forward_groups",
    "batch_mean_rate", "gnn_loss", "table_i_preset",
    "MrtBeamformer", "RandomBeamformer", "CemBeamformer", "OracleConfig",
    "mrt", "random_precoder", "cem_oracle", "project_power",
]
