"""Desk-scale simulator of split learning with a unidirectional contrastive
variant, a classical split-learning baseline, and centralized reference
trainers, built on an explicit forward/backward numerics core."""

from .components import DimConfig
from .losses import InfoNceConfig, info_nce, softmax_nll
from .runner import ExperimentConfig, run_experiment

__all__ = ["DimConfig", "InfoNceConfig", "info_nce", "softmax_nll",
           "ExperimentConfig", "run_experiment"]
