"""End-to-end reselection: group, attribute, select, rank, generate, evaluate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._seeds import derive_seed
from .attribution import ShapMatrix, background_means, linear_shap
from .grouping import GroupPartition, group_features
from .model import LinearScorer, TrainConfig, train
from .reselect import (
    BaselineSelection, ConstraintSets, GroupRanking, ReselectionGrid, evaluate_candidates,
    generate_subsets, mark_frontier, rank_groups, select_baseline,
)
from .tabular import DataSplit, FeatureTable, split


def stage_seeds(master):
    return {stage: derive_seed(master, stage) for stage in ("reference-split", "louvain", "grid", "evaluate")}


@dataclass
class ReselectionRun:
    seeds: dict
    reference_split: DataSplit
    partition: GroupPartition
    full_model: LinearScorer
    shap: ShapMatrix
    baseline: BaselineSelection
    ranking: GroupRanking
    subsets: list
    results: list
    failures: list = field(default_factory=list)


def run_reselection(table: FeatureTable, labels, scorer, *, tau=0.7, k=None, baseline=None,
                    grid: ReselectionGrid = None, constraints: ConstraintSets = ConstraintSets(),
                    config: TrainConfig = TrainConfig(), runs=3, seed=0, test_fraction=0.2,
                    resolution=1.0, attributions: ShapMatrix = None, jobs=1) -> ReselectionRun:
    """Run the full reselection search.

    The model on all features is fit on a reference split's training rows;
    its attributions on those rows drive baseline selection (unless
    ``baseline`` is given) and group ranking. ``attributions`` replaces the
    built-in linear SHAP with externally computed additive attributions,
    whose rows must be dataset row ids. ``grid.seed`` is overridden by the
    derived grid seed.
    """
    labels = np.asarray(labels)
    seeds = stage_seeds(seed)
    ref = split(table, labels, None, test_fraction, seeds["reference-split"])
    partition = group_features(table, tau, seed=seeds["louvain"], resolution=resolution)

    full = train(table, labels, range(table.n_features), config, rows=ref.train)
    if attributions is None:
        shap = linear_shap(full, table, background_means(table, ref.train), rows=ref.train)
    else:
        shap = attributions
    margins = shap.margins()

    if baseline is None:
        if k is None:
            k = (table.n_features + 1) // 2
        baseline = select_baseline(shap, k)
    ranking = rank_groups(shap, margins, partition, scorer, rows=shap.row_ids)

    grid = ReselectionGrid() if grid is None else grid
    grid = ReselectionGrid(grid.max_removals, grid.max_inclusions, grid.step, grid.inclusions_per_group,
                           seeds["grid"])
    subsets = generate_subsets(ranking, baseline, grid, constraints, partition)
    failures = []
    results = evaluate_candidates(subsets, table, labels, scorer, config, runs, seeds["evaluate"],
                                  test_fraction, baseline=baseline, jobs=jobs, failures=failures)
    if results:
        mark_frontier(results)
    return ReselectionRun(seeds, ref, partition, full, shap, baseline, ranking, subsets, results, failures)
