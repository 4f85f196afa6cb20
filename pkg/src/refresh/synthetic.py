"""Synthetic tabular data with planted correlated groups and a sensitive proxy."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tabular import FeatureTable, SensitiveVault


@dataclass(frozen=True)
class SyntheticSpec:
    n_rows: int = 2000
    n_groups: int = 5
    group_size: int = 4
    n_independent: int = 0
    noise: float = 0.3            # per-feature noise sd around the group latent; rho = 1 / (1 + noise^2)
    shared: float = 0.0           # variance share of a factor common to all group latents
    coef_max: float = 1.5
    coef_min: float = 0.3
    proxy_size: int = 0           # size of the group driven by the sensitive attribute (0 = none)
    sensitive_effect: float = 0.6 # log-odds shift of the label between sensitive groups
    seed: int = 0


@dataclass(frozen=True)
class SyntheticData:
    table: FeatureTable
    labels: np.ndarray
    vault: SensitiveVault
    groups: tuple          # planted groups as feature-index tuples
    proxy_group: tuple     # empty when no proxy was planted


def make_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> SyntheticData:
    rng = np.random.default_rng(spec.seed)
    n = spec.n_rows
    sensitive = rng.integers(0, 2, size=n)
    sign = 2.0 * sensitive - 1.0
    coefs = np.linspace(spec.coef_max, spec.coef_min, spec.n_groups) if spec.n_groups else np.zeros(0)
    latents = rng.standard_normal((n, spec.n_groups))
    if spec.shared:
        common = rng.standard_normal((n, 1))
        latents = np.sqrt(spec.shared) * common + np.sqrt(1.0 - spec.shared) * latents

    columns, names, groups = [], [], []
    for g in range(spec.n_groups):
        idx = []
        for m in range(spec.group_size):
            idx.append(len(columns))
            columns.append(latents[:, g] + spec.noise * rng.standard_normal(n))
            names.append(f"g{g}_f{m}")
        groups.append(tuple(idx))

    proxy = ()
    if spec.proxy_size:
        proxy_latent = sign + spec.noise * rng.standard_normal(n)
        idx = []
        for m in range(spec.proxy_size):
            idx.append(len(columns))
            columns.append(proxy_latent + spec.noise * rng.standard_normal(n))
            names.append(f"proxy_f{m}")
        proxy = tuple(idx)
        groups.append(proxy)

    for m in range(spec.n_independent):
        groups.append((len(columns),))
        columns.append(rng.standard_normal(n))
        names.append(f"ind_f{m}")

    logit = latents @ coefs + spec.sensitive_effect * sign
    labels = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(np.int8)
    vault = SensitiveVault("sensitive", np.where(sensitive == 1, "1", "0").astype(object), "1", "0")
    table = FeatureTable(tuple(names), tuple(columns))
    return SyntheticData(table, labels, vault, tuple(groups), proxy)


def write_csv(data: SyntheticData, path, label="label", sensitive="sensitive"):
    """Write features, label and the sensitive column as one CSV."""
    X = data.table.matrix()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(data.table.names) + [label, sensitive])
        for i in range(X.shape[0]):
            w.writerow([repr(float(x)) for x in X[i]] + [int(data.labels[i]), data.vault.values[i]])
