"""Similarity-gated message passing with trait-level copying, plus the
discrete culture-dissemination simulator and diffusion label generators
it is evaluated against."""
from .axelrod import CultureGrid, run_to_equilibrium
from .baseline import MeanAggConfig, MeanAggGNN
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .diffusion import DiffusionConfig, estimate, exact_lt_oracle, lt_estimate, sis_estimate
from .estimators import AxelGNNClassifier, AxelGNNRegressor, MeanAggClassifier, MeanAggRegressor
from .graph import Graph, NodeData, SplitMask, load_edge_list, split_nodes, synth_sbm
from .metrics import calinski_harabasz, polarization_report, silhouette, smoothness
from .model import AxelGNN, ModelConfig, load_checkpoint
from .tensor import Tape, Tensor, backward, check_gradients
from .training import DivergenceError, TrainConfig, fit, grid_search

__version__ = "0.1.0"

__all__ = [
    "AxelGNN", "AxelGNNClassifier", "AxelGNNRegressor", "ConfigError", "CultureGrid",
    "DiffusionConfig", "DivergenceError", "ExperimentConfig", "Graph", "MeanAggClassifier",
    "MeanAggConfig", "MeanAggGNN", "MeanAggRegressor", "ModelConfig", "NodeData", "SplitMask",
    "Tape", "Tensor", "TrainConfig", "backward", "calinski_harabasz", "check_gradients",
    "estimate", "exact_lt_oracle", "fit", "grid_search", "load_checkpoint", "load_config",
    "load_edge_list", "lt_estimate", "parse_config", "polarization_report", "run_to_equilibrium",
    "silhouette", "sis_estimate", "smoothness", "split_nodes", "synth_sbm",
]
