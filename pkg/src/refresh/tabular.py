"""Dataset ingestion, preprocessing and train/test splitting.

Protected attributes never enter a :class:`FeatureTable`. ``load_csv`` routes
the sensitive column into a :class:`SensitiveVault`, which only the fairness
scorer in :mod:`refresh.secondary` accepts.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, ParseError, SchemaError, ValidationError

logger = logging.getLogger(__name__)

_TRUE_LABELS = {"1", "1.0", "true", "yes"}
_FALSE_LABELS = {"0", "0.0", "false", "no"}


def _frozen(arr):
    arr = np.asarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FeatureTable:
    """Named feature columns of equal length.

    Columns are float arrays (NaN marks a missing value) or, before
    preprocessing, object arrays holding raw categorical strings.
    """

    names: tuple
    columns: tuple

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        columns = tuple(_frozen(c) for c in self.columns)
        if len(names) != len(columns):
            raise ValueError(f"{len(names)} names for {len(columns)} columns")
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate feature names: {dupes}")
        lengths = {len(c) for c in columns}
        if len(lengths) > 1:
            raise ValueError(f"columns have differing lengths {sorted(lengths)}")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "columns", columns)

    @classmethod
    def from_matrix(cls, names: Sequence[str], X) -> "FeatureTable":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(names):
            raise ValueError(f"matrix shape {X.shape} does not match {len(names)} names")
        return cls(tuple(names), tuple(X[:, j].copy() for j in range(X.shape[1])))

    @property
    def n_rows(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def n_features(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown feature {name!r}") from None

    def is_numeric(self, j: int) -> bool:
        return self.columns[j].dtype.kind == "f"

    def matrix(self) -> np.ndarray:
        """Dense ``(n_rows, n_features)`` float matrix; cached after first use."""
        cached = self.__dict__.get("_matrix")
        if cached is None:
            bad = [n for j, n in enumerate(self.names) if not self.is_numeric(j)]
            if bad:
                raise ValidationError(f"non-numeric columns (preprocess first): {bad}")
            if self.columns:
                cached = np.column_stack(self.columns).astype(float)
            else:
                cached = np.empty((0, 0))
            cached.setflags(write=False)
            object.__setattr__(self, "_matrix", cached)
        return cached

    def select(self, names: Sequence[str]) -> "FeatureTable":
        idx = [self.index(n) for n in names]
        return FeatureTable(tuple(self.names[j] for j in idx), tuple(self.columns[j] for j in idx))


@dataclass(frozen=True)
class SensitiveVault:
    """Protected attribute column, kept apart from the modeling features.

    ``privileged`` is group *a* and ``reference`` group *b* in the statistical
    parity difference ``P(y=1 | A=a) - P(y=1 | A=b)``.
    """

    attribute: str
    values: np.ndarray
    privileged: str
    reference: str

    def __post_init__(self):
        values = np.asarray([("" if v is None else str(v)) for v in self.values], dtype=object)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "privileged", str(self.privileged))
        object.__setattr__(self, "reference", str(self.reference))
        if self.privileged == self.reference:
            raise ValidationError("privileged and reference groups must differ")

    def __len__(self):
        return len(self.values)

    def masks(self, rows=None):
        """Boolean masks (privileged, reference) over ``rows`` (all rows if None)."""
        vals = self.values if rows is None else self.values[np.asarray(rows)]
        return vals == self.privileged, vals == self.reference


@dataclass
class PreprocessReport:
    imputed: dict = field(default_factory=dict)
    means: dict = field(default_factory=dict)
    stds: dict = field(default_factory=dict)
    onehot: dict = field(default_factory=dict)
    dropped: dict = field(default_factory=dict)

    def source_of(self, encoded: str) -> str:
        for src, encoded_names in self.onehot.items():
            if encoded in encoded_names:
                return src
        return encoded


@dataclass(frozen=True)
class DataSplit:
    train: np.ndarray
    test: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "train", _frozen(np.sort(np.asarray(self.train, dtype=np.int64))))
        object.__setattr__(self, "test", _frozen(np.sort(np.asarray(self.test, dtype=np.int64))))
        if np.intersect1d(self.train, self.test).size:
            raise ValueError("train and test rows overlap")


@dataclass(frozen=True)
class Schema:
    """Column roles for :func:`load_csv`. Unlisted columns are features."""

    label: str
    sensitive: Optional[str] = None
    drop: tuple = ()
    label_map: Optional[Mapping[str, int]] = None
    privileged: Optional[str] = None
    reference: Optional[str] = None

    @classmethod
    def from_roles(cls, roles: Mapping[str, str], **kwargs) -> "Schema":
        """Build from a ``{column: role}`` mapping with roles feature/label/sensitive/drop."""
        by_role = {"feature": [], "label": [], "sensitive": [], "drop": []}
        for col, role in roles.items():
            if role not in by_role:
                raise ConfigError(f"unknown role {role!r} for column {col!r}")
            by_role[role].append(col)
        if len(by_role["label"]) != 1:
            raise ConfigError(f"exactly one label column required, got {by_role['label']}")
        if len(by_role["sensitive"]) > 1:
            raise ConfigError(f"at most one sensitive column allowed, got {by_role['sensitive']}")
        sensitive = by_role["sensitive"][0] if by_role["sensitive"] else None
        return cls(label=by_role["label"][0], sensitive=sensitive, drop=tuple(by_role["drop"]), **kwargs)


def _coerce_labels(raw, label_map, column):
    out = np.empty(len(raw), dtype=np.int8)
    for i, v in enumerate(raw):
        key = v.strip()
        if label_map is not None:
            if key not in label_map:
                raise ValidationError(f"label {key!r} in row {i + 1} not in declared mapping")
            val = int(label_map[key])
        elif key.lower() in _TRUE_LABELS:
            val = 1
        elif key.lower() in _FALSE_LABELS:
            val = 0
        else:
            raise ValidationError(f"non-binary label {key!r} in column {column!r} (declare a label mapping)")
        if val not in (0, 1):
            raise ValidationError(f"label mapping must produce 0/1, got {val}")
        out[i] = val
    return out


def _parse_column(raw):
    values = []
    numeric = True
    for v in raw:
        s = v.strip()
        if s == "":
            values.append(None)
            continue
        if numeric:
            try:
                values.append(float(s))
                continue
            except ValueError:
                numeric = False
        values.append(s)
    if numeric:
        return np.array([math.nan if v is None else v for v in values], dtype=float)
    return np.array([None if v is None else str(v) for v in values], dtype=object)


def load_csv(path, schema: Schema):
    """Read a CSV into ``(FeatureTable, labels, SensitiveVault | None)``.

    Labels come back as an int8 array of 0/1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or all(not h.strip() for h in header):
            raise SchemaError(f"{path}: missing header row")
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise SchemaError(f"{path}: duplicate column names in header")
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: line {reader.line_num} has {len(row)} fields, expected {len(header)}",
                    line=reader.line_num,
                )
            rows.append(row)
    if not rows:
        raise SchemaError(f"{path}: no data rows")

    wanted = [schema.label] + ([schema.sensitive] if schema.sensitive else []) + list(schema.drop)
    missing = [c for c in wanted if c not in header]
    if missing:
        raise SchemaError(f"{path}: columns {missing} named in schema but absent from header")
    if schema.sensitive == schema.label:
        raise SchemaError("label column cannot also be the sensitive column")

    cols = list(zip(*rows))
    raw = {name: cols[j] for j, name in enumerate(header)}
    labels = _coerce_labels(raw[schema.label], schema.label_map, schema.label)

    vault = None
    if schema.sensitive:
        values = [v.strip() for v in raw[schema.sensitive]]
        levels = sorted({v for v in values if v})
        privileged, reference = schema.privileged, schema.reference
        if privileged is None or reference is None:
            if len(levels) != 2:
                raise ValidationError(
                    f"sensitive column {schema.sensitive!r} has levels {levels}; declare privileged/reference groups"
                )
            privileged = levels[1] if privileged is None else privileged
            reference = levels[0] if reference is None else reference
        vault = SensitiveVault(schema.sensitive, np.array(values, dtype=object), privileged, reference)

    skip = set(wanted)
    names = [h for h in header if h not in skip]
    table = FeatureTable(tuple(names), tuple(_parse_column(raw[n]) for n in names))
    return table, labels, vault


def preprocess(table: FeatureTable, categorical=(), fit_rows=None):
    """One-hot encode categoricals, mean-impute and z-score every column.

    Statistics are computed on ``fit_rows`` (all rows by default) and applied
    to every row. All-missing and constant columns are dropped and recorded in
    the report rather than raising. Non-numeric columns that were not declared
    categorical are encoded as categoricals as well.
    """
    categorical = set(categorical)
    unknown = categorical - set(table.names)
    if unknown:
        raise ConfigError(f"categorical columns not in table: {sorted(unknown)}")
    rows = np.arange(table.n_rows) if fit_rows is None else np.asarray(fit_rows)
    report = PreprocessReport()

    expanded = []  # (name, float column)
    for j, name in enumerate(table.names):
        col = table.columns[j]
        if name in categorical or not table.is_numeric(j):
            if name not in categorical:
                logger.info("column %r is non-numeric; one-hot encoding it", name)
            as_str = np.array(["" if (v is None or (isinstance(v, float) and math.isnan(v))) else str(v)
                               for v in col], dtype=object)
            levels = sorted({v for v in as_str if v != ""})
            if not levels:
                report.dropped[name] = "all-missing"
                continue
            encoded = []
            for level in levels:
                enc_name = f"{name}={level}"
                expanded.append((enc_name, (as_str == level).astype(float)))
                encoded.append(enc_name)
            report.onehot[name] = encoded
        else:
            col = np.asarray(col, dtype=float)
            observed = col[rows]
            observed = observed[~np.isnan(observed)]
            if observed.size == 0:
                report.dropped[name] = "all-missing"
                continue
            n_missing = int(np.isnan(col).sum())
            if n_missing:
                col = np.where(np.isnan(col), observed.mean(), col)
                report.imputed[name] = n_missing
            expanded.append((name, col))

    names, columns = [], []
    for name, col in expanded:
        fit = col[rows]
        mean = fit.mean()
        std = fit.std()
        if not std > 1e-12 * max(1.0, abs(mean)):
            report.dropped[name] = "constant"
            continue
        z = (col - mean) / std
        # a second centering pass removes the O(eps * |mean| / std) residue
        z = z - z[rows].mean()
        report.means[name] = float(mean)
        report.stds[name] = float(std)
        names.append(name)
        columns.append(z)
    for src, enc in list(report.onehot.items()):
        kept = [e for e in enc if e in report.means]
        if kept:
            report.onehot[src] = kept
        else:
            del report.onehot[src]
    return FeatureTable(tuple(names), tuple(columns)), report


def split(table: Optional[FeatureTable], labels, vault=None, test_fraction=0.2, seed=0) -> DataSplit:
    """Stratified train/test split; identical output for identical seed."""
    if not 0 < test_fraction < 1:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    labels = np.asarray(labels)
    n = len(labels)
    if table is not None and table.n_rows != n:
        raise ValidationError(f"table has {table.n_rows} rows but {n} labels")
    if vault is not None and len(vault) != n:
        raise ValidationError(f"vault has {len(vault)} rows but {n} labels")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 2:
            raise ValidationError(f"class {cls} has {idx.size} rows; need at least 2 to stratify")
        idx = rng.permutation(idx)
        n_test = int(round(test_fraction * idx.size))
        n_test = min(max(n_test, 1), idx.size - 1)
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return DataSplit(np.concatenate(train), np.concatenate(test), seed)
