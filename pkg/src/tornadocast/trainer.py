"""Mini-batch training loop, training curves and the scikit-learn style classifier."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import neuralnet as nn
from .exceptions import DataError, DivergenceError, SchemaError
from .preprocess import SequenceBatch, make_rng


@dataclass
class TrainConfig:
    hidden_size: int = 64
    dropout_rate: float = 0.2
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 128
    seed: int = 42
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float | None = None
    patience: int | None = None
    dtype: str = "float64"

    def __post_init__(self):
        if self.hidden_size < 1 or self.batch_size < 1:
            raise ValueError("hidden_size and batch_size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingCurve:
    epochs: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.epochs)

    def append(self, epoch, loss, accuracy):
        self.epochs.append(int(epoch))
        self.loss.append(float(loss))
        self.accuracy.append(float(accuracy))

    def to_dict(self) -> dict:
        return {"epoch": self.epochs, "loss": self.loss, "accuracy": self.accuracy}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "loss", "accuracy"])
        for row in zip(self.epochs, self.loss, self.accuracy):
            w.writerow([row[0], repr(row[1]), repr(row[2])])
        return buf.getvalue()


@dataclass
class LstmModel:
    params: nn.LstmParams
    config: TrainConfig

    def predict_proba(self, inputs) -> np.ndarray:
        return nn.predict_proba(self.params, inputs)


def train(batch: SequenceBatch, config: TrainConfig | None = None):
    """Fit a fresh LSTM on ``batch``; returns ``(LstmModel, TrainingCurve)``.

    Each epoch reshuffles with an rng seeded from ``(seed, epoch)``, then takes
    one Adam step per mini-batch on the mean BCE. The curve stores the epoch's
    sample-weighted mean loss and its accuracy at threshold 0.5, both measured
    on the train-mode forward passes of that epoch.
    """
    config = config or TrainConfig()
    n = len(batch)
    if n == 0:
        raise DataError("cannot train on an empty batch")
    if len(np.unique(batch.labels)) < 2:
        raise DataError("training data must contain both classes")

    dtype = np.dtype(config.dtype)
    params = nn.init_params(batch.inputs.shape[2], config.hidden_size, config.seed, dtype)
    x_all = batch.inputs.astype(dtype, copy=False)
    y_all = batch.labels
    state = nn.AdamState.zeros_like(params)
    curve = TrainingCurve()
    best, stale = np.inf, 0

    for epoch in range(config.epochs):
        rng = make_rng(config.seed, epoch)
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            x, y = x_all[idx], y_all[idx]
            trace = nn.lstm_forward(params, x, config.dropout_rate, True, rng)
            losses = nn.bce_loss(trace.p, y)
            batch_loss = float(losses.sum())
            if not np.isfinite(batch_loss):
                raise DivergenceError(epoch, b, batch_loss)
            loss_sum += batch_loss
            correct += int(((trace.p >= 0.5).astype(np.int64) == y).sum())
            grads = nn.backward(trace, params, y)
            # clamped probabilities can hide an overflow that still poisons the gradients
            if not np.isfinite(nn.global_norm(grads)):
                raise DivergenceError(epoch, b, batch_loss)
            if config.clip_norm is not None:
                grads = nn.clip_by_global_norm(grads, config.clip_norm)
            params, state = nn.adam_step(
                params, grads, state, config.learning_rate,
                config.adam_beta1, config.adam_beta2, config.adam_eps,
            )
        epoch_loss = loss_sum / n
        curve.append(epoch + 1, epoch_loss, correct / n)

        if config.patience is not None:
            if epoch_loss < best:
                best, stale = epoch_loss, 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    return LstmModel(params, config), curve


def curve_is_converging(curve: TrainingCurve):
    """True iff the last epoch's loss <= the first's and its accuracy >= the first's."""
    if len(curve) < 2:
        raise ValueError("need at least 2 epochs to judge convergence")
    d_loss = curve.loss[-1] - curve.loss[0]
    d_acc = curve.accuracy[-1] - curve.accuracy[0]
    return d_loss <= 0 and d_acc >= 0, {"loss_delta": d_loss, "accuracy_delta": d_acc}


# --------------------------------------------------------------------------
# Estimator
# --------------------------------------------------------------------------


def _as_sequences(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        return X[:, None, :]
    if X.ndim != 3:
        raise SchemaError(f"expected (n, f) or (n, window, f) input, got shape {X.shape}")
    return X


class LSTMClassifier(ClassifierMixin, BaseEstimator):
    """LSTM -> dropout -> sigmoid binary classifier.

    ``X`` is ``(n, n_features)`` (each row a length-1 sequence) or
    ``(n, window, n_features)``. Labels must be 0/1.
    """

    def __init__(self, hidden_size=64, dropout_rate=0.2, learning_rate=1e-3, epochs=10,
                 batch_size=128, random_state=42, threshold=0.5, clip_norm=None,
                 patience=None, dtype="float64"):
        self.hidden_size = hidden_size
        self.dropout_rate = dropout_rate
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state
        self.threshold = threshold
        self.clip_norm = clip_norm
        self.patience = patience
        self.dtype = dtype

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            hidden_size=self.hidden_size, dropout_rate=self.dropout_rate,
            learning_rate=self.learning_rate, epochs=self.epochs,
            batch_size=self.batch_size, seed=self.random_state,
            clip_norm=self.clip_norm, patience=self.patience, dtype=self.dtype,
        )

    def fit(self, X, y):
        seqs = _as_sequences(X)
        y = np.asarray(y).astype(np.int64)
        if not np.isfinite(seqs).all():
            raise DataError("inputs contain NaN or infinite values")
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = seqs.shape[2]
        model, self.curve_ = train(SequenceBatch(seqs, y, seqs.shape[1]), self.train_config())
        self.params_ = model.params
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        seqs = _as_sequences(X)
        if seqs.shape[2] != self.n_features_in_:
            raise SchemaError(f"model expects {self.n_features_in_} features, got {seqs.shape[2]}")
        p = nn.predict_proba(self.params_, seqs)
        return np.column_stack([1.0 - p, p])

    def decision_function(self, X):
        return self.predict_proba(X)[:, 1]

    def predict(self, X):
        return (self.decision_function(X) >= self.threshold).astype(np.int64)
