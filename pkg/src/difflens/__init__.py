"""difflens: instance-difficulty analytics for DNN classifier test sets."""

from .bundle import EmbeddingBundle, load_bundle, validate_bundle, write_bundle
from .difficulty import (
    ComputeResult,
    DifficultyConfig,
    DifficultyProfile,
    IndexParams,
    ProbeTrace,
    assign_pattern,
    build_spaces,
    compute_profiles,
    human_difficulty,
    kdn_score,
    prediction_depth,
    project_2d,
    run_pipeline,
)
from .flow import FlowGraph, PcpAxes, build_flow, flow_click_select, pcp_data
from .knn import ExactIndex, NeighborSet, RpForestIndex, build_index, knn_predict, recall_eval
from .pca import PcaModel, Projection2D, pca_fit, pca_inverse, pca_transform
from .subsets import Subset, SubsetStore, SelectionContext, evaluate_descriptor
from .synth import SynthSpec, synth_generate

__version__ = "0.1.0"

__all__ = [
    "ComputeResult",
    "DifficultyConfig",
    "DifficultyProfile",
    "EmbeddingBundle",
    "ExactIndex",
    "FlowGraph",
    "IndexParams",
    "NeighborSet",
    "PcaModel",
    "PcpAxes",
    "ProbeTrace",
    "Projection2D",
    "RpForestIndex",
    "SelectionContext",
    "Subset",
    "SubsetStore",
    "SynthSpec",
    "assign_pattern",
    "build_flow",
    "build_index",
    "build_spaces",
    "compute_profiles",
    "evaluate_descriptor",
    "flow_click_select",
    "human_difficulty",
    "kdn_score",
    "knn_predict",
    "load_bundle",
    "pca_fit",
    "pca_inverse",
    "pca_transform",
    "pcp_data",
    "prediction_depth",
    "project_2d",
    "recall_eval",
    "run_pipeline",
    "synth_generate",
    "validate_bundle",
    "write_bundle",
]
