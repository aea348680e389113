"""3D patch classifiers for neuron reconstruction quality control.

Consumes the patch datasets (.nqcd) and fold files the QC tools emit,
trains one of six 3D classifier architectures per cross-validation
fold, and writes per-record scores back as CSV for evaluation.
"""

from .data import PatchDataset, TrainerDataError, read_folds
from .networks import NETWORKS, build_network, parameter_count
from .predict import predict_fold, write_scores_csv
from .train import (
    TrainConfig,
    TrainResult,
    load_checkpoint,
    rank_auc,
    train,
    validation_auc,
    weighted_loss,
)

__all__ = [
    "NETWORKS",
    "PatchDataset",
    "TrainConfig",
    "TrainResult",
    "TrainerDataError",
    "build_network",
    "load_checkpoint",
    "parameter_count",
    "predict_fold",
    "rank_auc",
    "read_folds",
    "train",
    "validation_auc",
    "weighted_loss",
    "write_scores_csv",
]
