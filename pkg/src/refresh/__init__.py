"""REFRESH: SHAP-guided feature reselection for secondary model characteristics."""

__version__ = "0.1.0"

from .attribution import ShapMatrix, anticipated_without, brute_force_shapley, linear_shap
from .grouping import GroupPartition, build_graph, group_features, louvain_partition, pearson_matrix
from .model import LinearScorer, TrainConfig, auc, train
from .pipeline import run_reselection
from .reselect import (
    ConstraintSets, ReselectionGrid, benchmark_approximation, evaluate_candidates, generate_subsets,
    pareto_frontier, rank_groups, select_baseline,
)
from .secondary import FairnessScorer, RobustnessScorer, rob, spd
from .tabular import FeatureTable, SensitiveVault, Schema, load_csv, preprocess, split
