"""Additive SHAP attributions and anticipated outcomes of never-trained models.

Attributions live in margin (log-odds) space, where they are exactly
additive for a logistic-link linear model. Anticipated probabilities apply
the sigmoid after subtracting the removed features' attributions.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputFormatError, ValidationError
from .model import LinearScorer, sigmoid
from .tabular import FeatureTable

MAX_BRUTE_FORCE_FEATURES = 12
CSV_HEADER_LINE = "# refresh-schema: 1 shap"


@dataclass(frozen=True)
class ShapMatrix:
    """Per-row attributions plus a base value, both in margin units."""

    base_value: float
    values: np.ndarray
    names: tuple = ()
    row_ids: np.ndarray = None

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "base_value", float(self.base_value))
        ids = np.arange(v.shape[0]) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        if len(ids) != v.shape[0]:
            raise ValidationError(f"{len(ids)} row ids for {v.shape[0]} rows")
        object.__setattr__(self, "row_ids", ids)
        if self.names and len(self.names) != v.shape[1]:
            raise ValidationError(f"{len(self.names)} names for {v.shape[1]} attribution columns")
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_features(self):
        return self.values.shape[1]

    def margins(self):
        """Reconstructed model margins ``base + sum(phi)``."""
        return self.base_value + self.values.sum(axis=1)

    def mean_abs(self):
        return np.abs(self.values).mean(axis=0)

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write(CSV_HEADER_LINE + "\n")
        w = csv.writer(buf, lineterminator="\n")
        names = self.names or tuple(str(i) for i in range(self.n_features))
        w.writerow(["row_id", "phi0"] + [f"phi_{n}" for n in names])
        for rid, row in zip(self.row_ids.tolist(), self.values):
            w.writerow([rid, repr(self.base_value)] + [repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path, names=None):
        """Load attributions computed elsewhere (any additive explainer).

        With ``names`` given, columns are reordered to that feature order and
        every name must be present.
        """
        lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
        rows = list(csv.reader(lines))
        if not rows or rows[0][:2] != ["row_id", "phi0"]:
            raise InputFormatError(f"{path}: expected header starting with row_id,phi0")
        header = rows[0]
        cols = [h[len("phi_"):] if h.startswith("phi_") else h for h in header[2:]]
        try:
            data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
        except ValueError as exc:
            raise InputFormatError(f"{path}: non-numeric attribution ({exc})") from exc
        if data.size == 0 or data.shape[1] != len(header):
            raise InputFormatError(f"{path}: empty or ragged attribution table")
        base = data[:, 1]
        if np.ptp(base) > 1e-9 * max(1.0, abs(base[0])):
            raise InputFormatError(f"{path}: base value varies across rows")
        values = data[:, 2:]
        if names is not None:
            where = {c: k for k, c in enumerate(cols)}
            missing = [n for n in names if n not in where]
            if missing:
                raise InputFormatError(f"{path}: no attributions for features {missing}")
            values = values[:, [where[n] for n in names]]
            cols = list(names)
        return cls(float(base[0]), values, tuple(cols), data[:, 0].astype(np.int64))


@dataclass(frozen=True)
class AnticipatedOutcome:
    removed: frozenset
    margin: np.ndarray
    proba: np.ndarray


def background_means(table: FeatureTable, rows=None):
    X = table.matrix()
    if rows is not None:
        X = X[np.asarray(rows)]
    return X.mean(axis=0)


def linear_shap(model: LinearScorer, table, background, rows=None) -> ShapMatrix:
    """Exact interventional Shapley values of a linear margin.

    ``phi_p = w_p (x_p - mean_p)`` and ``phi_0 = bias + sum_p w_p mean_p``.
    ``table`` is a FeatureTable or a raw matrix in full-feature layout.
    """
    if isinstance(table, FeatureTable):
        X, names = table.matrix(), table.names
    else:
        X, names = np.atleast_2d(np.asarray(table, dtype=float)), model.feature_names
    background = np.asarray(background, dtype=float)
    if X.shape[1] != model.n_features or background.shape != (model.n_features,):
        raise ValidationError(
            f"feature mismatch: model has {model.n_features}, table {X.shape[1]}, background {background.shape}"
        )
    if rows is not None:
        rows = np.asarray(rows)
        X = X[rows]
    w = model.full_weights()
    phi = (X - background) * w
    base = model.bias + float(w @ background)
    return ShapMatrix(base, phi, names if len(names) == X.shape[1] else (), rows)


def _shapley_weights(d):
    fact = math.factorial
    return np.array([fact(s) * fact(d - s - 1) / fact(d) for s in range(d)])


def brute_force_shapley(predict, row, background, d=None):
    """Exact Shapley values by enumerating all ``2**d`` coalitions.

    The coalition value is the mean of ``predict`` over background rows with
    the out-of-coalition features replaced by background values. ``predict``
    maps an ``(m, d)`` array to ``m`` outputs. Returns ``(phi, base)`` with
    ``base`` the empty-coalition value.
    """
    row = np.asarray(row, dtype=float).ravel()
    background = np.atleast_2d(np.asarray(background, dtype=float))
    d = row.size if d is None else d
    if d > MAX_BRUTE_FORCE_FEATURES:
        raise ValidationError(f"refusing to enumerate 2^{d} coalitions (limit d <= {MAX_BRUTE_FORCE_FEATURES})")
    if row.size != d or background.shape[1] != d:
        raise ValidationError(f"row/background widths {row.size}/{background.shape[1]} do not match d={d}")
    n_bg = background.shape[0]
    masks = np.array(list(itertools.product((False, True), repeat=d)), dtype=bool)
    # coalition id: bit i set <=> feature i is in the coalition
    ids = masks @ (1 << np.arange(d))
    value = np.empty(1 << d)
    batch = np.where(masks[:, None, :], row[None, None, :], background[None, :, :])
    out = np.asarray(predict(batch.reshape(-1, d)), dtype=float).reshape(len(masks), n_bg)
    value[ids] = out.mean(axis=1)

    weights = _shapley_weights(d)
    sizes = np.array([bin(s).count("1") for s in range(1 << d)])
    phi = np.zeros(d)
    for i in range(d):
        bit = 1 << i
        without = np.array([s for s in range(1 << d) if not s & bit])
        phi[i] = np.sum(weights[sizes[without]] * (value[without | bit] - value[without]))
    return phi, float(value[0])


def anticipated_without(shap: ShapMatrix, margins, removed) -> AnticipatedOutcome:
    """Anticipated outcome of a model trained without the ``removed`` features:
    the full model's margin minus the removed features' attributions."""
    removed = frozenset(int(i) for i in removed)
    margins = np.asarray(margins, dtype=float)
    if removed:
        bad = [i for i in removed if not 0 <= i < shap.n_features]
        if bad:
            raise ValidationError(f"removed features {sorted(bad)} out of range")
        if len(removed) == shap.n_features:
            # exact, so an all-removed model scores as a true constant
            margins = np.full(margins.shape, shap.base_value)
        else:
            margins = margins - shap.values[:, sorted(removed)].sum(axis=1)
    else:
        margins = margins.copy()
    return AnticipatedOutcome(removed, margins, sigmoid(margins))
