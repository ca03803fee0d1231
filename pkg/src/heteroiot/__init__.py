"""Heterogeneous IoT sensor sequence classification toolkit.

A self-contained implementation of a combined convolutional /
bidirectional-GRU sequence classifier with its own reverse-mode autodiff
engine, data pipeline (ingestion, imputation, stratified splitting,
borderline-SMOTE, augmentation), training loop and evaluation suite.
"""

from .data import (
    AugmentPolicy,
    Dataset,
    SmoteConfig,
    SplitSpec,
    augment_timeseries,
    bsmote_oversample,
    impute_mean,
    load_csv,
    load_dataset,
    save_dataset,
    stratified_split,
    synth_benchmark,
    truncate_to_min,
)
from .gradcheck import FiniteDiffReport, finite_diff_check
from .metrics import EvalReport, confusion_matrix, evaluation_report
from .model import DeepHeteroIoT, ModelConfig, build_model
from .optim import Adam
from .tensor import NonFiniteError, ShapeError, Tensor, no_grad
from .train import (
    Checkpoint,
    TrainConfig,
    TrainingDiverged,
    evaluate,
    run_ablation,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AugmentPolicy",
    "Checkpoint",
    "Dataset",
    "DeepHeteroIoT",
    "EvalReport",
    "FiniteDiffReport",
    "ModelConfig",
    "NonFiniteError",
    "ShapeError",
    "SmoteConfig",
    "SplitSpec",
    "Tensor",
    "TrainConfig",
    "TrainingDiverged",
    "augment_timeseries",
    "bsmote_oversample",
    "build_model",
    "confusion_matrix",
    "evaluate",
    "evaluation_report",
    "finite_diff_check",
    "impute_mean",
    "load_csv",
    "load_dataset",
    "no_grad",
    "run_ablation",
    "save_dataset",
    "stratified_split",
    "synth_benchmark",
    "train",
    "truncate_to_min",
]
