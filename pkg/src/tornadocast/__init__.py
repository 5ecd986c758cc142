"""Tornado occurrence classification from daily weather and storm-event records."""

from .dataio import DatasetSummary, LabeledDataset, join_label, summarize
from .evaluator import (
    ConfusionMatrix,
    CrossValReport,
    FoldReport,
    MetricSet,
    RocCurve,
    average_confusion,
    classify,
    confusion,
    cross_validate,
    metrics,
    roc_curve,
)
from .exceptions import DataError, DivergenceError, SchemaError, TornadocastError
from .preprocess import SMOTE, FoldPlan, MeanImputer, SeededKFold, SmoteConfig, Standardizer
from .synth import SynthConfig, generate
from .trainer import LSTMClassifier, TrainConfig, TrainingCurve, train

__version__ = "0.1.0"

__all__ = [
    "ConfusionMatrix",
    "CrossValReport",
    "DataError",
    "DatasetSummary",
    "DivergenceError",
    "FoldPlan",
    "FoldReport",
    "LSTMClassifier",
    "LabeledDataset",
    "MeanImputer",
    "MetricSet",
    "RocCurve",
    "SMOTE",
    "SchemaError",
    "SeededKFold",
    "SmoteConfig",
    "Standardizer",
    "SynthConfig",
    "TornadocastError",
    "TrainConfig",
    "TrainingCurve",
    "average_confusion",
    "classify",
    "confusion",
    "cross_validate",
    "generate",
    "join_label",
    "metrics",
    "roc_curve",
    "summarize",
    "train",
]
