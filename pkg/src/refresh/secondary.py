"""Secondary model characteristics: statistical parity and boundary distance.

Every scorer maps prediction probabilities to a :class:`SecondaryScore`
whose ``value`` is oriented so that higher is better. The fairness scorer is
the only object in the package that holds a :class:`SensitiveVault`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, ValidationError
from .tabular import SensitiveVault

KINDS = ("fairness", "robustness", "external")


@dataclass(frozen=True)
class SecondaryScore:
    kind: str
    raw: float
    value: float

    def __post_init__(self):
        if not (np.isfinite(self.raw) and np.isfinite(self.value)):
            raise ValidationError(f"non-finite {self.kind} score ({self.raw}, {self.value})")


@dataclass(frozen=True)
class RobustnessConfig:
    delta: float = 0.5

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ConfigError(f"decision threshold must lie in (0, 1), got {self.delta}")


def spd(probas, vault: SensitiveVault, delta=0.5, rows=None) -> float:
    """``P(yhat=1 | A=privileged) - P(yhat=1 | A=reference)`` with ``yhat = [p >= delta]``.

    ``rows`` gives the dataset row index of each probability; omit it when
    ``probas`` covers every row of the vault.
    """
    probas = np.asarray(probas, dtype=float)
    a, b = vault.masks(rows)
    if len(a) != len(probas):
        raise ValidationError(f"{len(probas)} probabilities for {len(a)} vault rows")
    if not a.any() or not b.any():
        raise ValidationError(
            f"SPD needs both groups present ({vault.privileged!r}: {a.sum()}, {vault.reference!r}: {b.sum()})"
        )
    yhat = probas >= delta
    return float(yhat[a].mean() - yhat[b].mean())


def rob(probas, config=RobustnessConfig()) -> float:
    """Mean distance ``|delta - p|`` of the probabilities from the decision threshold."""
    delta = config.delta if isinstance(config, RobustnessConfig) else float(config)
    return float(np.mean(np.abs(delta - np.asarray(probas, dtype=float))))


@dataclass(frozen=True)
class FairnessScorer:
    vault: SensitiveVault
    delta: float = 0.5
    kind = "fairness"

    def __call__(self, probas, rows=None) -> SecondaryScore:
        raw = spd(probas, self.vault, self.delta, rows)
        return SecondaryScore(self.kind, raw, -abs(raw))


@dataclass(frozen=True)
class RobustnessScorer:
    config: RobustnessConfig = RobustnessConfig()
    kind = "robustness"

    def __call__(self, probas, rows=None) -> SecondaryScore:
        raw = rob(probas, self.config)
        return SecondaryScore(self.kind, raw, raw)


@dataclass(frozen=True)
class ExternalScorer:
    """Wraps a third-party ``fn(probas, rows) -> float`` that is already higher-is-better."""

    fn: Callable
    kind: str = "external"

    def __call__(self, probas, rows=None) -> SecondaryScore:
        raw = float(self.fn(probas, rows))
        return SecondaryScore(self.kind, raw, raw)


def make_scorer(kind, vault=None, delta=0.5):
    if kind == "fairness":
        if vault is None:
            raise ConfigError("fairness scoring needs a sensitive column in the schema")
        return FairnessScorer(vault, delta)
    if kind == "robustness":
        return RobustnessScorer(RobustnessConfig(delta))
    raise ConfigError(f"secondary must be one of fairness/robustness, got {kind!r}")
