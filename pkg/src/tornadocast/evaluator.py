"""Confusion matrices, rate metrics, ROC/AUC and the k-fold cross-validation driver."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataio import LabeledDataset
from .exceptions import DataError, SchemaError
from .preprocess import (
    FoldPlan,
    MeanImputer,
    SequenceBatch,
    SmoteConfig,
    Standardizer,
    derive_seed,
    kfold_split,
    make_fold_plan,
    make_sequences,
    smote,
)
from .trainer import TrainConfig, TrainingCurve, train

MODES = ("sound", "paper-faithful")


def classify(p, threshold: float = 0.5):
    """1 where ``p >= threshold``; the boundary counts as positive."""
    p = np.asarray(p)
    out = (p >= threshold).astype(np.int64)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: float
    tn: float
    fp: float
    fn: float

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}

    def to_csv(self) -> str:
        # rows are actual classes, columns predicted classes
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["actual", "predicted_0", "predicted_1"])
        w.writerow([0, repr(self.tn), repr(self.fp)])
        w.writerow([1, repr(self.fn), repr(self.tp)])
        return buf.getvalue()


def confusion(pred, truth) -> ConfusionMatrix:
    pred = np.asarray(pred).astype(np.int64)
    truth = np.asarray(truth).astype(np.int64)
    if pred.shape != truth.shape:
        raise SchemaError(f"prediction/truth length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise DataError("cannot build a confusion matrix from zero samples")
    return ConfusionMatrix(
        tp=int(np.sum((truth == 1) & (pred == 1))),
        tn=int(np.sum((truth == 0) & (pred == 0))),
        fp=int(np.sum((truth == 0) & (pred == 1))),
        fn=int(np.sum((truth == 1) & (pred == 0))),
    )


@dataclass(frozen=True)
class MetricSet:
    """Rates derived from a confusion matrix; ``None`` marks a zero denominator."""

    sensitivity: float | None
    fpr: float | None
    accuracy: float | None
    precision: float | None
    npv: float | None

    def to_dict(self) -> dict:
        return {
            "sensitivity": self.sensitivity,
            "fpr": self.fpr,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "npv": self.npv,
        }

    @property
    def undefined(self) -> list[str]:
        return [k for k, v in self.to_dict().items() if v is None]


def _ratio(num, den):
    return None if den == 0 else num / den


def metrics(cm: ConfusionMatrix) -> MetricSet:
    return MetricSet(
        sensitivity=_ratio(cm.tp, cm.tp + cm.fn),
        fpr=_ratio(cm.fp, cm.fp + cm.tn),
        accuracy=_ratio(cm.tp + cm.tn, cm.total),
        precision=_ratio(cm.tp, cm.tp + cm.fp),
        npv=_ratio(cm.tn, cm.tn + cm.fn),
    )


@dataclass
class RocCurve:
    """Points from a descending threshold sweep; ``thresholds[0]`` is +inf (the origin)."""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def to_dict(self) -> dict:
        th = [None if not math.isfinite(t) else float(t) for t in self.thresholds]
        return {"thresholds": th, "fpr": self.fpr.tolist(), "tpr": self.tpr.tolist(), "auc": self.auc}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, r in zip(self.thresholds, self.fpr, self.tpr):
            w.writerow(["inf" if not math.isfinite(t) else repr(float(t)), repr(float(f)), repr(float(r))])
        return buf.getvalue()


def roc_curve(scores, truth) -> RocCurve:
    """ROC by sweeping every distinct score from high to low; AUC by trapezoids.

    Tied scores move the curve in one diagonal step, which is what makes the
    trapezoidal area equal the Mann-Whitney statistic with ties counted 1/2.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth).astype(np.int64)
    if scores.shape != truth.shape:
        raise SchemaError("scores and truth lengths differ")
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC/AUC is undefined when only one class is present")

    order = np.argsort(-scores, kind="mergesort")
    s, t = scores[order], truth[order]
    # last index of each block of equal scores
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tps = np.cumsum(t)[last]
    fps = (last + 1) - tps
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    thresholds = np.r_[np.inf, s[last]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(thresholds, fpr, tpr, auc)


def auc_score(scores, truth) -> float:
    return roc_curve(scores, truth).auc


def average_confusion(matrices) -> ConfusionMatrix:
    """Cell-wise arithmetic mean, real-valued."""
    matrices = [m.confusion if isinstance(m, FoldReport) else m for m in matrices]
    if not matrices:
        raise ValueError("need at least one confusion matrix")
    k = len(matrices)
    return ConfusionMatrix(
        tp=sum(m.tp for m in matrices) / k,
        tn=sum(m.tn for m in matrices) / k,
        fp=sum(m.fp for m in matrices) / k,
        fn=sum(m.fn for m in matrices) / k,
    )


# --------------------------------------------------------------------------
# Cross-validation
# --------------------------------------------------------------------------


@dataclass
class EvaluationBasis:
    """Scores of one fold restricted to a subset of its test rows."""

    confusion: ConfusionMatrix
    metrics: MetricSet
    auc: float | None
    n_test: int

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.to_dict(),
            "metrics": self.metrics.to_dict(),
            "auc": self.auc,
            "n_test": self.n_test,
        }


@dataclass
class FoldReport:
    fold_index: int
    confusion: ConfusionMatrix
    metrics: MetricSet
    roc: RocCurve | None
    curve: TrainingCurve
    n_train: int
    n_test: int
    # original dataset row of each scored test sample (-1 for SMOTE rows)
    test_source: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    test_scores: np.ndarray = field(default_factory=lambda: np.empty(0))
    original_only: EvaluationBasis | None = None

    @property
    def auc(self) -> float | None:
        return None if self.roc is None else self.roc.auc

    def to_dict(self) -> dict:
        return {
            "fold_index": self.fold_index,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "confusion": self.confusion.to_dict(),
            "metrics": self.metrics.to_dict(),
            "auc": self.auc,
            "training_curve": self.curve.to_dict(),
            "original_only": None if self.original_only is None else self.original_only.to_dict(),
        }


@dataclass
class CrossValReport:
    folds: list[FoldReport]
    mode: str
    settings: dict = field(default_factory=dict)

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([f.metrics.accuracy for f in self.folds], dtype=np.float64)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std_accuracy(self) -> float:
        # population std over folds
        return float(np.std(self.accuracies))

    @property
    def average_confusion(self) -> ConfusionMatrix:
        return average_confusion(self.folds)

    def to_dict(self) -> dict:
        avg = self.average_confusion
        return {
            "mode": self.mode,
            "settings": self.settings,
            "n_folds": len(self.folds),
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "fold_accuracy": self.accuracies.tolist(),
            "fold_auc": [f.auc for f in self.folds],
            "average_confusion": avg.to_dict(),
            "average_metrics": metrics(avg).to_dict(),
            "folds": [f.to_dict() for f in self.folds],
        }


def _score_basis(scores, truth, threshold) -> EvaluationBasis:
    cm = confusion(classify(scores, threshold), truth)
    both = 0 < int(np.sum(truth)) < len(truth)
    return EvaluationBasis(cm, metrics(cm), auc_score(scores, truth) if both else None, len(truth))


@dataclass
class _FoldTask:
    fold_index: int
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    test_source: np.ndarray
    fit_preprocessing: bool
    smote_config: SmoteConfig | None
    train_config: TrainConfig
    threshold: float


def _run_fold(task: _FoldTask) -> FoldReport:
    X_tr, y_tr, X_te = task.X_train, task.y_train, task.X_test
    if len(np.unique(y_tr)) < 2:
        raise DataError(f"fold {task.fold_index}: training data lacks one of the classes")
    if task.fit_preprocessing:
        if np.isnan(X_tr).any() or np.isnan(X_te).any():
            imputer = MeanImputer().fit(X_tr)
            X_tr, X_te = imputer.transform(X_tr), imputer.transform(X_te)
        std = Standardizer().fit(X_tr)
        X_tr, X_te = std.transform(X_tr), std.transform(X_te)
        if task.smote_config is not None:
            sc = task.smote_config
            cfg = SmoteConfig(sc.k_neighbors, sc.target_ratio, derive_seed(sc.seed, task.fold_index))
            X_tr, y_tr, _ = smote(X_tr, y_tr, cfg)

    seed = derive_seed(task.train_config.seed, task.fold_index)
    cfg = TrainConfig(**{**task.train_config.to_dict(), "seed": seed})
    model, curve = train(SequenceBatch(X_tr, y_tr, X_tr.shape[1]), cfg)
    scores = model.predict_proba(X_te)
    y_te = task.y_test
    cm = confusion(classify(scores, task.threshold), y_te)
    both = 0 < int(y_te.sum()) < len(y_te)
    report = FoldReport(
        task.fold_index, cm, metrics(cm), roc_curve(scores, y_te) if both else None, curve,
        len(y_tr), len(y_te), task.test_source, scores,
    )
    synthetic = task.test_source < 0
    if synthetic.any() and (~synthetic).any():
        keep = ~synthetic
        report.original_only = _score_basis(scores[keep], y_te[keep], task.threshold)
    return report


def cross_validate(samples: LabeledDataset, plan: FoldPlan | None = None,
                   train_config: TrainConfig | None = None, mode: str = "sound",
                   smote_config: SmoteConfig | None = None, window: int = 1,
                   threshold: float = 0.5, use_smote: bool = True, jobs: int = 1) -> CrossValReport:
    """K-fold evaluation of the LSTM pipeline.

    ``sound``: impute (if needed), standardize and SMOTE are fitted on each
    training fold only; test folds hold original rows only.

    ``paper-faithful``: impute, standardize and SMOTE run once on the whole
    dataset, then the augmented set is split. Test folds then contain synthetic
    rows, so each fold also reports an ``original_only`` basis.

    Fold ``k`` trains with seed derived from ``(train_config.seed, k)``; the
    result does not depend on ``jobs``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    plan = plan or FoldPlan()
    train_config = train_config or TrainConfig()
    smote_config = (smote_config or SmoteConfig()) if use_smote else None

    if window > 1:
        samples = samples.sorted_by_location()
    batch = make_sequences(samples, window)
    X, y = batch.inputs, batch.labels
    source = batch.source_index
    if len(np.unique(y)) < 2:
        raise DataError("dataset must contain both classes")

    if mode == "paper-faithful":
        if np.isnan(X).any():
            X = MeanImputer().fit(X).transform(X)
        X = Standardizer().fit(X).transform(X)
        if smote_config is not None:
            X, y, rec = smote(X, y, smote_config)
            source = np.r_[source, np.full(rec.n_synthetic, -1, dtype=np.int64)]

    if plan.n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    plan = make_fold_plan(len(y), plan.n_folds, plan.seed)
    tasks = [
        _FoldTask(k, X[tr], y[tr], X[te], y[te], source[te], mode == "sound",
                  smote_config, train_config, threshold)
        for k, (tr, te) in enumerate(kfold_split(len(y), plan))
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            folds = list(pool.map(_run_fold, tasks))
    else:
        folds = [_run_fold(t) for t in tasks]

    settings = {
        "n_folds": plan.n_folds,
        "fold_seed": plan.seed,
        "window": window,
        "threshold": threshold,
        "smote": None if smote_config is None else {
            "k_neighbors": smote_config.k_neighbors,
            "target_ratio": smote_config.target_ratio,
            "seed": smote_config.seed,
        },
        "train": train_config.to_dict(),
        "n_samples": len(samples),
        "n_sequences": len(batch),
        "n_features": samples.n_features,
    }
    return CrossValReport(folds, mode, settings)
