"""Logistic-link linear classifier trained by full-batch gradient descent."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .errors import ConfigError, InputFormatError, TrainingError, ValidationError
from .tabular import FeatureTable

DEFAULT_THRESHOLD = 0.5


def sigmoid(z):
    return expit(z)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 500
    l2: float = 1e-3
    seed: int = 0
    tol: float = 1e-10

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.l2 < 0:
            raise ConfigError(f"l2 must be >= 0, got {self.l2}")


@dataclass(frozen=True)
class LinearScorer:
    """``margin = bias + sum_j weights[j] * x[active[j]]``; probability via sigmoid.

    ``active`` holds column indices into the full feature table the model was
    trained from, so array rows are passed in full-table layout.
    """

    active: tuple
    weights: np.ndarray
    bias: float
    n_features: int
    feature_names: tuple = ()
    loss_history: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "active", tuple(int(i) for i in self.active))
        if len(self.active) != len(w):
            raise ValueError(f"{len(w)} weights for {len(self.active)} active features")

    def full_weights(self):
        """Weight vector over all ``n_features`` columns (zeros off the active set)."""
        w = np.zeros(self.n_features)
        w[list(self.active)] = self.weights
        return w

    def margin(self, X):
        """Margins for rows in full-table layout, or for one ``{name: value}`` row."""
        if isinstance(X, Mapping):
            missing = [self.feature_names[i] for i in self.active if self.feature_names[i] not in X]
            if missing:
                raise ValidationError(f"row lacks active features {missing}")
            x = np.array([float(X[self.feature_names[i]]) for i in self.active])
            return float(self.bias + x @ self.weights)
        X = np.asarray(X, dtype=float)
        squeeze = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise ValidationError(f"rows have {X.shape[1]} columns, model expects {self.n_features}")
        if self.active:
            m = X[:, list(self.active)] @ self.weights + self.bias
        else:
            m = np.full(X.shape[0], self.bias)
        return m[0] if squeeze else m

    def predict_proba(self, X):
        return sigmoid(self.margin(X))

    def predict(self, X, threshold=DEFAULT_THRESHOLD):
        return (self.predict_proba(X) >= threshold).astype(np.int8)

    def to_dict(self):
        names = self.feature_names or tuple(str(i) for i in range(self.n_features))
        return {
            "schema_version": 1,
            "features": [names[i] for i in self.active],
            "weights": self.weights.tolist(),
            "bias": self.bias,
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, doc, feature_names):
        try:
            index = {n: i for i, n in enumerate(feature_names)}
            active = [index[f] for f in doc["features"]]
            return cls(tuple(active), np.asarray(doc["weights"], dtype=float), float(doc["bias"]),
                       len(feature_names), tuple(feature_names))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputFormatError(f"not a model document: {exc}") from exc


def log_loss(w, b, X, y, l2=0.0):
    """Mean L2-regularised negative log-likelihood; the bias is not penalised."""
    z = X @ w + b
    # log(1 + e^z) - y z, written stably
    nll = np.logaddexp(0.0, z) - y * z
    return float(nll.mean() + 0.5 * l2 * (w @ w))


def log_loss_grad(w, b, X, y, l2=0.0):
    r = sigmoid(X @ w + b) - y
    n = X.shape[0]
    return X.T @ r / n + l2 * w, float(r.sum() / n)


def _fit(X, y, config: TrainConfig):
    n, d = X.shape
    X = np.ascontiguousarray(X)
    w = np.zeros(d)
    b = 0.0
    lr, l2 = config.learning_rate, config.l2
    history = []
    for epoch in range(config.epochs + 1):
        # one margin evaluation yields both the loss at w and its gradient;
        # softplus and sigmoid share exp(-|z|), which is cheaper than logaddexp
        with np.errstate(over="ignore", invalid="ignore"):
            z = X @ w + b
            e = np.exp(-np.abs(z))
            softplus = np.maximum(z, 0.0) + np.log1p(e)
            loss = float((softplus - y * z).mean() + 0.5 * l2 * (w @ w))
        if not np.isfinite(loss):
            raise TrainingError(f"loss diverged (lr={lr}); retry with a smaller learning rate")
        history.append(loss)
        if epoch == config.epochs or (epoch > 0 and abs(history[-2] - loss) < config.tol):
            break
        inv = 1.0 / (1.0 + e)
        r = np.where(z >= 0, inv, e * inv) - y
        w = w - lr * (X.T @ r / n + l2 * w)
        b = b - lr * float(r.sum() / n)
    return w, b, history


def train(table: FeatureTable, labels, subset, config: TrainConfig = TrainConfig(), rows=None) -> LinearScorer:
    """Fit on ``rows`` (all rows if None) using only the columns in ``subset``.

    Starts from zero weights, so results are bit-identical across repeats.
    """
    subset = sorted(set(int(i) for i in subset))
    if not subset:
        raise TrainingError("cannot train on an empty feature subset")
    if subset[0] < 0 or subset[-1] >= table.n_features:
        raise TrainingError(f"subset indices outside 0..{table.n_features - 1}")
    X = table.matrix()
    y = np.asarray(labels, dtype=float)
    if rows is not None:
        X = X[np.asarray(rows)]
        y = y[np.asarray(rows)]
    if len(np.unique(y)) < 2:
        raise TrainingError("training rows must contain both classes")
    w, b, history = _fit(X[:, subset], y, config)
    return LinearScorer(tuple(subset), w, b, table.n_features, table.names, tuple(history))


def train_intercept(labels, rows=None, n_features=0, names=()) -> LinearScorer:
    """Constant model predicting the training base rate (the no-feature model)."""
    y = np.asarray(labels, dtype=float)
    if rows is not None:
        y = y[np.asarray(rows)]
    p = np.clip(y.mean(), 1e-12, 1 - 1e-12)
    return LinearScorer((), np.zeros(0), float(np.log(p / (1 - p))), n_features, tuple(names))


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with average ranks for ties."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValidationError(f"{scores.shape[0]} scores for {labels.shape[0]} labels")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))
