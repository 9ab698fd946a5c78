"""Prior-free multi-attribute recognition via spatial decomposition.

A from-scratch float64 autodiff core drives a small CNN extractor, a
latent-factor assignment/embedding step with a correlation penalty, and
per-attribute probes, trained end to end on a synthetic localized-attribute
benchmark with ground-truth masks for localization scoring.
"""

from .classifier import (
    DEFAULT_GAMMA,
    classification_loss,
    evaluate_accuracy,
    init_classifier,
    predict,
    total_loss,
)
from .correlation import correlation_loss, correlation_matrix, mean_abs_off_diagonal
from .decomposition import assign, decompose, embed, flatten_feature, init_latent_factors
from .extractor import ExtractorConfig, ExtractorParams, extract, init_extractor
from .heatmaps import localization_score, rearrange_assignment, write_heatmap_pgm
from .model import Model, ModelConfig, init_model, load_checkpoint, save_checkpoint
from .synthetic import GeneratorConfig, SyntheticSample, generate, load_shard, make_split, save_shard
from .tensor import Tensor, backward, finite_diff_check
from .training import Adam, EpochStats, TrainConfig, evaluate, train

__all__ = [
    "Adam",
    "DEFAULT_GAMMA",
    "EpochStats",
    "ExtractorConfig",
    "ExtractorParams",
    "GeneratorConfig",
    "Model",
    "ModelConfig",
    "SyntheticSample",
    "Tensor",
    "TrainConfig",
    "assign",
    "backward",
    "classification_loss",
    "correlation_loss",
    "correlation_matrix",
    "decompose",
    "embed",
    "evaluate",
    "evaluate_accuracy",
    "extract",
    "finite_diff_check",
    "flatten_feature",
    "generate",
    "init_classifier",
    "init_extractor",
    "init_latent_factors",
    "init_model",
    "load_checkpoint",
    "load_shard",
    "localization_score",
    "make_split",
    "mean_abs_off_diagonal",
    "predict",
    "rearrange_assignment",
    "save_checkpoint",
    "save_shard",
    "total_loss",
    "train",
    "write_heatmap_pgm",
]
