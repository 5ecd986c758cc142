"""Standardization, SMOTE oversampling, RNN sequence shaping and seeded k-fold plans.

The estimators follow the scikit-learn conventions (constructor stores
hyperparameters only, learned state lives in trailing-underscore attributes),
so they can be cloned and composed with the rest of the ecosystem.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.neighbors import NearestNeighbors
from sklearn.utils.validation import check_is_fitted

from .dataio import LabeledDataset
from .exceptions import DataError, SchemaError


def make_rng(seed, *keys) -> np.random.Generator:
    """The package-wide PRNG: PCG64 seeded from ``(seed, *keys)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


def derive_seed(seed, *keys) -> int:
    """A 63-bit seed derived from ``(seed, *keys)``, e.g. one per fold."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(2, np.uint64)[0] >> 1)


def _as_rows(X) -> np.ndarray:
    """View 2-D or 3-D input as a 2-D (rows, n_features) matrix."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        return X.reshape(-1, X.shape[-1])
    if X.ndim != 2:
        raise SchemaError(f"expected 2-D or 3-D input, got shape {X.shape}")
    return X


# --------------------------------------------------------------------------
# Standardizer
# --------------------------------------------------------------------------


class Standardizer(TransformerMixin, BaseEstimator):
    """Z-score scaler using the population standard deviation.

    Columns with zero spread map to 0 instead of raising or dividing by one.
    Accepts 2-D ``(n, f)`` or 3-D ``(n, window, f)`` arrays.
    """

    def fit(self, X, y=None):
        rows = _as_rows(X)
        if rows.shape[0] < 2:
            raise DataError("need at least 2 samples to fit a standardizer")
        self.means_ = rows.mean(axis=0)
        self.std_devs_ = rows.std(axis=0)
        self.n_features_in_ = rows.shape[1]
        return self

    def _check(self, X):
        check_is_fitted(self, "means_")
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.n_features_in_:
            raise SchemaError(
                f"standardizer fitted on {self.n_features_in_} features, got {X.shape[-1]}"
            )
        return X

    def transform(self, X):
        X = self._check(X)
        scale = np.where(self.std_devs_ > 0, self.std_devs_, 1.0)
        out = (X - self.means_) / scale
        out[..., self.std_devs_ == 0] = 0.0
        return out

    def inverse_transform(self, X):
        X = self._check(X)
        return X * self.std_devs_ + self.means_

    def to_dict(self) -> dict:
        check_is_fitted(self, "means_")
        return {"means": self.means_.tolist(), "std_devs": self.std_devs_.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Standardizer":
        std = cls()
        std.means_ = np.asarray(data["means"], dtype=np.float64)
        std.std_devs_ = np.asarray(data["std_devs"], dtype=np.float64)
        if std.means_.shape != std.std_devs_.shape or not np.isfinite(std.std_devs_).all():
            raise SchemaError("malformed standardizer document")
        std.n_features_in_ = std.means_.shape[0]
        return std

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Standardizer":
        return cls.from_dict(json.loads(text))


def fit_standardizer(X) -> Standardizer:
    return Standardizer().fit(X)


def apply_standardizer(std: Standardizer, X) -> np.ndarray:
    return std.transform(X)


class MeanImputer(TransformerMixin, BaseEstimator):
    """Column-mean imputation fitted on one set of rows, applied to any other."""

    def fit(self, X, y=None):
        rows = _as_rows(X)
        present = ~np.isnan(rows)
        if not present.any(axis=0).all():
            bad = np.flatnonzero(~present.any(axis=0)).tolist()
            raise DataError(f"columns {bad} have no present values")
        self.means_ = np.nanmean(rows, axis=0)
        self.n_features_in_ = rows.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "means_")
        X = np.array(X, dtype=np.float64)
        mask = np.isnan(X)
        if mask.any():
            X[mask] = np.broadcast_to(self.means_, X.shape)[mask]
        return X


# --------------------------------------------------------------------------
# SMOTE
# --------------------------------------------------------------------------


@dataclass
class SmoteConfig:
    k_neighbors: int = 5
    target_ratio: float = 1.0
    seed: int = 42

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if not 0.0 < self.target_ratio <= 1.0:
            raise ValueError("target_ratio must be in (0, 1]")


@dataclass
class SmoteRecord:
    """Provenance of each synthetic row: indices into the input array."""

    minority_label: int
    parents: np.ndarray
    neighbors: np.ndarray
    gaps: np.ndarray
    n_original: int

    @property
    def n_synthetic(self) -> int:
        return len(self.parents)


def smote(X, y, config: SmoteConfig | None = None):
    """Oversample the minority class until ``minority / majority == target_ratio``.

    Each synthetic row is ``x + u * (x_nn - x)`` with ``u ~ U(0, 1)`` and ``x_nn``
    drawn uniformly from the ``k`` nearest (Euclidean) minority neighbours of
    ``x``. Parents are taken round-robin over a seeded shuffle of the minority
    rows so every row is used about equally often.

    Input may be 2-D or 3-D; 3-D sequences are interpolated as flat vectors.
    Returns ``(X_out, y_out, record)`` with the originals first, unchanged.
    """
    config = config or SmoteConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if len(X) != len(y):
        raise SchemaError("X and y lengths differ")
    labels, counts = np.unique(y, return_counts=True)
    if len(labels) != 2:
        raise DataError("SMOTE needs both classes present")
    minority = int(labels[np.argmin(counts)])
    n_min, n_maj = int(counts.min()), int(counts.max())
    min_idx = np.flatnonzero(y == minority)
    if config.k_neighbors >= n_min:
        raise DataError(
            f"k_neighbors={config.k_neighbors} must be smaller than the minority count {n_min}"
        )

    n_new = max(0, int(round(config.target_ratio * n_maj)) - n_min)
    empty = np.empty(0, dtype=np.int64)
    if n_new == 0:
        return X.copy(), y.copy(), SmoteRecord(minority, empty, empty, np.empty(0), len(y))

    flat = X.reshape(len(X), -1)
    pts = flat[min_idx]
    nn = NearestNeighbors(n_neighbors=config.k_neighbors + 1).fit(pts)
    _, knn = nn.kneighbors(pts)
    # drop the query point itself; with duplicates it may not sit in column 0
    own = knn == np.arange(n_min)[:, None]
    own[~own.any(axis=1), -1] = True
    knn = knn[~own].reshape(n_min, config.k_neighbors)

    rng = make_rng(config.seed)
    order = rng.permutation(n_min)
    parent_local = order[np.arange(n_new) % n_min]
    choice = rng.integers(0, config.k_neighbors, size=n_new)
    neighbor_local = knn[parent_local, choice]
    gaps = rng.random(n_new)

    base = pts[parent_local]
    synth = base + gaps[:, None] * (pts[neighbor_local] - base)
    X_out = np.concatenate([X, synth.reshape((n_new,) + X.shape[1:])])
    y_out = np.concatenate([y, np.full(n_new, minority, dtype=np.int64)])
    record = SmoteRecord(minority, min_idx[parent_local], min_idx[neighbor_local], gaps, len(y))
    return X_out, y_out, record


class SMOTE(BaseEstimator):
    """Resampler wrapper around :func:`smote` with the usual ``fit_resample`` API."""

    def __init__(self, k_neighbors=5, target_ratio=1.0, random_state=42):
        self.k_neighbors = k_neighbors
        self.target_ratio = target_ratio
        self.random_state = random_state

    def fit_resample(self, X, y):
        cfg = SmoteConfig(self.k_neighbors, self.target_ratio, self.random_state)
        X_out, y_out, self.record_ = smote(X, y, cfg)
        return X_out, y_out


# --------------------------------------------------------------------------
# Sequences
# --------------------------------------------------------------------------


@dataclass
class SequenceBatch:
    inputs: np.ndarray
    labels: np.ndarray
    window: int
    # row of the source dataset that supplied each sequence's final day
    source_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 3 or self.inputs.shape[1] != self.window:
            raise SchemaError(f"inputs must be (n, {self.window}, f), got {self.inputs.shape}")
        if len(self.labels) != len(self.inputs):
            raise SchemaError("inputs and labels disagree on sample count")

    def __len__(self):
        return len(self.labels)


def make_sequences(samples: LabeledDataset, window: int = 1) -> SequenceBatch:
    """Shape samples for the LSTM.

    ``window == 1`` wraps every row as a length-1 sequence. For ``window > 1`` the
    samples must be sorted by (location_id, date); each run of consecutive
    calendar days at one location yields ``run_length - window + 1`` sliding
    windows labelled by their last day.
    """
    if window < 1:
        raise ValueError("window must be a positive integer")
    n = len(samples)
    if window == 1:
        return SequenceBatch(samples.X[:, None, :].copy(), samples.y.copy(), 1, np.arange(n))

    locs = samples.location_ids.astype(str)
    days = samples.dates.astype("datetime64[D]").astype(np.int64)
    if n and (np.any(locs[1:] < locs[:-1]) or np.any((locs[1:] == locs[:-1]) & (days[1:] <= days[:-1]))):
        raise DataError("samples must be sorted by (location_id, date) for window > 1")

    # run_start[i]: index where the consecutive-day run containing i begins
    breaks = np.ones(n, dtype=bool)
    if n > 1:
        breaks[1:] = (locs[1:] != locs[:-1]) | (days[1:] - days[:-1] != 1)
    run_start = np.maximum.accumulate(np.where(breaks, np.arange(n), 0))
    ends = np.flatnonzero(np.arange(n) - run_start >= window - 1)
    if len(ends) == 0:
        raise DataError(f"window {window} is longer than every location's run of consecutive days")
    gather = ends[:, None] + np.arange(-window + 1, 1)[None, :]
    return SequenceBatch(samples.X[gather], samples.y[ends], window, ends)


# --------------------------------------------------------------------------
# Folds
# --------------------------------------------------------------------------


@dataclass
class FoldPlan:
    n_folds: int = 10
    seed: int = 42
    assignments: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "n_folds": self.n_folds,
            "seed": self.seed,
            "assignments": None if self.assignments is None else self.assignments.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FoldPlan":
        a = data.get("assignments")
        return cls(int(data["n_folds"]), int(data["seed"]), None if a is None else np.asarray(a, dtype=np.int64))


def make_fold_plan(n_samples: int, n_folds: int = 10, seed: int = 42) -> FoldPlan:
    """Shuffle ``range(n_samples)`` with the seeded PRNG and cut it into contiguous blocks.

    The first ``n_samples % n_folds`` blocks get one extra element.
    """
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    if n_samples < n_folds:
        raise DataError(f"cannot split {n_samples} samples into {n_folds} folds")
    perm = make_rng(seed).permutation(n_samples)
    sizes = np.full(n_folds, n_samples // n_folds)
    sizes[: n_samples % n_folds] += 1
    assignments = np.empty(n_samples, dtype=np.int64)
    assignments[perm] = np.repeat(np.arange(n_folds), sizes)
    return FoldPlan(n_folds, seed, assignments)


def kfold_split(n_samples: int, plan: FoldPlan | None = None):
    """Return ``[(train_idx, test_idx), ...]`` for every fold of ``plan``."""
    plan = plan or FoldPlan()
    if plan.assignments is None or len(plan.assignments) != n_samples:
        plan = make_fold_plan(n_samples, plan.n_folds, plan.seed)
    return [
        (np.flatnonzero(plan.assignments != k), np.flatnonzero(plan.assignments == k))
        for k in range(plan.n_folds)
    ]


class SeededKFold:
    """``sklearn.model_selection``-compatible splitter backed by :func:`make_fold_plan`."""

    def __init__(self, n_splits=10, random_state=42):
        self.n_splits = n_splits
        self.random_state = random_state

    def get_n_splits(self, X=None, y=None, groups=None):
        return self.n_splits

    def split(self, X, y=None, groups=None):
        n = len(X)
        yield from kfold_split(n, make_fold_plan(n, self.n_splits, self.random_state))
