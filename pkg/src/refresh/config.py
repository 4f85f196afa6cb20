"""Run configuration: a flat ``key = value`` TOML file, or a JSON run manifest."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .model import TrainConfig
from .reselect import ReselectionGrid
from .secondary import RobustnessConfig
from .tabular import Schema


@dataclass
class RunConfig:
    dataset: Optional[str] = None
    label: str = "label"
    sensitive: Optional[str] = None
    privileged: Optional[str] = None
    reference: Optional[str] = None
    label_map: Optional[dict] = None
    drop: list = field(default_factory=list)
    categorical: list = field(default_factory=list)

    tau: float = 0.7
    resolution: float = 1.0

    k: Optional[int] = None
    baseline: Optional[list] = None
    attributions: Optional[str] = None

    max_removals: int = 50
    max_inclusions: int = 50
    step: int = 5
    inclusions_per_group: int = 3
    must_keep: list = field(default_factory=list)
    must_exclude: list = field(default_factory=list)

    secondary: str = "fairness"
    delta: float = 0.5

    runs: int = 3
    seed: int = 0
    test_fraction: float = 0.2
    learning_rate: float = 0.5
    epochs: int = 500
    l2: float = 1e-3
    tol: float = 1e-10

    bench_taus: list = field(default_factory=lambda: [0.1, 0.4, 0.7, 0.9])
    out: str = "refresh_out"
    jobs: Optional[int] = None

    def validate(self):
        """Check every field that can be checked without loading the data."""
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau: must lie in [0, 1], got {self.tau}")
        if self.resolution <= 0:
            raise ConfigError(f"resolution: must be > 0, got {self.resolution}")
        if self.secondary not in ("fairness", "robustness"):
            raise ConfigError(f"secondary: must be fairness or robustness, got {self.secondary!r}")
        if self.runs < 1:
            raise ConfigError(f"runs: must be >= 1, got {self.runs}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError(f"test_fraction: must lie in (0, 1), got {self.test_fraction}")
        if self.k is not None and self.k < 1:
            raise ConfigError(f"k: must be >= 1, got {self.k}")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError(f"jobs: must be >= 1, got {self.jobs}")
        for tau in self.bench_taus:
            if not 0.0 <= tau <= 1.0:
                raise ConfigError(f"bench_taus: {tau} outside [0, 1]")
        overlap = set(self.must_keep) & set(self.must_exclude)
        if overlap:
            raise ConfigError(f"must_keep/must_exclude: {sorted(overlap)} appear in both")
        self.grid()
        self.train_config()
        RobustnessConfig(self.delta)
        return self

    def schema(self) -> Schema:
        return Schema(self.label, self.sensitive, tuple(self.drop), self.label_map, self.privileged, self.reference)

    def grid(self) -> ReselectionGrid:
        return ReselectionGrid(self.max_removals, self.max_inclusions, self.step, self.inclusions_per_group)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.epochs, self.l2, self.seed, self.tol)

    def to_dict(self):
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_INT = {"k", "max_removals", "max_inclusions", "step", "inclusions_per_group", "runs", "seed", "epochs", "jobs"}
_FLOAT = {"tau", "resolution", "delta", "test_fraction", "learning_rate", "l2", "tol"}
_LIST = {"drop", "categorical", "must_keep", "must_exclude", "bench_taus", "baseline"}


def _coerce(key, value):
    if value is None:
        return None
    if key in _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if key in _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if key in _LIST:
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        return [float(v) for v in value] if key == "bench_taus" else [str(v) for v in value]
    if key == "label_map":
        if not isinstance(value, dict):
            raise ConfigError(f"label_map: expected a table, got {value!r}")
        return {str(k): int(v) for k, v in value.items()}
    return str(value)


def from_mapping(doc, base: RunConfig = None) -> RunConfig:
    cfg = RunConfig() if base is None else dataclasses.replace(base)
    for key, value in doc.items():
        if key not in _FIELDS:
            raise ConfigError(f"{key}: unknown configuration key")
        setattr(cfg, key, _coerce(key, value))
    return cfg


def load_config(path) -> RunConfig:
    """Read a TOML config, or a JSON manifest written by a previous run.

    Relative ``dataset``, ``attributions`` and ``out`` paths resolve against
    the config file's directory.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            doc = json.loads(text)
            doc = doc.get("config", doc)
        else:
            doc = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"config: cannot parse {path}: {exc}") from exc
    cfg = from_mapping(doc)
    for key in ("dataset", "attributions", "out"):
        value = getattr(cfg, key)
        if value and not Path(value).is_absolute():
            setattr(cfg, key, str((path.parent / value).resolve()))
    return cfg
