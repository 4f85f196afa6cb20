"""Group ranking, constrained subset generation and candidate evaluation.

Groups are ranked by the secondary score their removal is anticipated to
produce. Baseline features are removed from the top of the ranking and
non-baseline features are included from the bottom, over a grid of removal
and inclusion budgets. Candidates are then retrained and scored for real.
"""

from __future__ import annotations

import csv
import io
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ._seeds import derive_seed
from .attribution import ShapMatrix, anticipated_without, linear_shap, background_means
from .errors import ConfigError, InputFormatError, RefreshError, ValidationError
from .grouping import GroupPartition, group_features
from .model import TrainConfig, auc, train, train_intercept
from .tabular import FeatureTable, split

logger = logging.getLogger(__name__)

RESULTS_HEADER_LINE = "# refresh-schema: 1 results"
RESULTS_COLUMNS = [
    "subset_id", "n_removed", "n_included", "n_features", "auc_mean", "auc_std",
    "secondary_kind", "secondary_mean", "secondary_std", "is_baseline", "on_pareto_frontier",
    "secondary_raw_mean", "secondary_raw_std",
]


@dataclass(frozen=True)
class BaselineSelection:
    baseline: frozenset
    candidates: frozenset
    n_features: int
    rule: str = "top-k mean |SHAP|"

    def __post_init__(self):
        if not self.baseline:
            raise ValidationError("baseline set must be non-empty")
        if self.baseline & self.candidates:
            raise ValidationError("baseline and candidate sets overlap")
        if self.baseline | self.candidates != frozenset(range(self.n_features)):
            raise ValidationError("baseline and candidate sets must cover every feature")

    @classmethod
    def from_features(cls, baseline, n_features, rule="given"):
        baseline = frozenset(int(i) for i in baseline)
        return cls(baseline, frozenset(range(n_features)) - baseline, n_features, rule)


@dataclass(frozen=True)
class GroupRanking:
    """Groups in descending order of anticipated secondary score."""

    entries: tuple

    @property
    def order(self):
        return [gid for gid, _ in self.entries]

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class ReselectionGrid:
    max_removals: int = 50
    max_inclusions: int = 50
    step: int = 5
    inclusions_per_group: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("max_removals", "max_inclusions", "step", "inclusions_per_group"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.step > min(self.max_removals, self.max_inclusions):
            raise ConfigError(f"step {self.step} exceeds a maximum budget")

    def removal_budgets(self):
        return list(range(0, self.max_removals + 1, self.step))

    def inclusion_budgets(self):
        return list(range(0, self.max_inclusions + 1, self.step))


@dataclass(frozen=True)
class ConstraintSets:
    must_keep: frozenset = frozenset()
    must_exclude: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "must_keep", frozenset(int(i) for i in self.must_keep))
        object.__setattr__(self, "must_exclude", frozenset(int(i) for i in self.must_exclude))
        overlap = self.must_keep & self.must_exclude
        if overlap:
            raise ConfigError(f"features {sorted(overlap)} are both must-keep and must-exclude")


class ReselectedSubset(NamedTuple):
    removals: int
    inclusions: int
    features: frozenset

    @property
    def subset_id(self):
        return f"r{self.removals:03d}_c{self.inclusions:03d}"


@dataclass
class CandidateResult:
    subset_id: str
    features: frozenset
    n_removed: int
    n_included: int
    auc_mean: float
    auc_std: float
    secondary_kind: str
    secondary_mean: float
    secondary_std: float
    secondary_raw_mean: float = float("nan")
    secondary_raw_std: float = float("nan")
    runs: int = 1
    is_baseline: bool = False
    on_pareto_frontier: bool = False

    @property
    def n_features(self):
        return len(self.features)


def select_baseline(shap: ShapMatrix, k: int) -> BaselineSelection:
    """Top-``k`` features by mean absolute attribution; ties go to the lower index."""
    n = shap.n_features
    if not 1 <= k <= n:
        raise ConfigError(f"baseline size k must lie in [1, {n}], got {k}")
    importance = shap.mean_abs()
    order = np.lexsort((np.arange(n), -importance))
    return BaselineSelection.from_features(order[:k].tolist(), n, rule=f"top-{k} mean |SHAP|")


def rank_groups(shap: ShapMatrix, margins, partition: GroupPartition, scorer, rows=None) -> GroupRanking:
    """Score the anticipated model without each group; best score first.

    ``rows`` are the dataset rows the attributions were computed on, passed
    through to the scorer. Equal scores keep group-index order.
    """
    if partition.n_features != shap.n_features:
        raise ValidationError(f"partition covers {partition.n_features} features, attributions {shap.n_features}")
    if rows is None and shap.row_ids is not None:
        rows = shap.row_ids
    scored = []
    for gid, group in enumerate(partition.groups):
        outcome = anticipated_without(shap, margins, group)
        try:
            score = scorer(outcome.proba, rows)
        except Exception as exc:
            raise RefreshError(f"scorer failed on group {gid}: {exc}") from exc
        scored.append((gid, score))
    scored.sort(key=lambda e: -e[1].value)
    return GroupRanking(tuple(scored))


def _group_order(features, seed, tag, gid):
    rng = np.random.default_rng(derive_seed(seed, tag, gid))
    return [features[i] for i in rng.permutation(len(features))]


def removal_pool(ranking, baseline, partition, budget, seed=0):
    """Baseline features taken from the top-ranked groups, at most ``budget``.

    Whole groups are taken until the budget would be exceeded; the last group
    contributes a seeded random subset. The per-group random order is fixed,
    so pools for larger budgets contain pools for smaller ones.
    """
    pool = []
    for gid in ranking.order:
        if len(pool) >= budget:
            break
        cand = sorted(set(partition.groups[gid]) & baseline)
        room = budget - len(pool)
        if len(cand) <= room:
            pool.extend(cand)
        else:
            pool.extend(_group_order(cand, seed, "remove", gid)[:room])
    return frozenset(pool)


def inclusion_pool(ranking, baseline, partition, budget, per_group, seed=0):
    """Non-baseline features from the bottom-ranked groups, ``per_group`` at a time."""
    pool = []
    for gid in reversed(ranking.order):
        if len(pool) >= budget:
            break
        cand = sorted(set(partition.groups[gid]) - baseline)
        if not cand:
            continue
        take = min(per_group, budget - len(pool))
        pool.extend(_group_order(cand, seed, "include", gid)[:take])
    return frozenset(pool)


def generate_subsets(ranking: GroupRanking, baseline: BaselineSelection, grid: ReselectionGrid,
                     constraints: ConstraintSets, partition: GroupPartition):
    """Every (removal, inclusion) budget pair on the grid, as reselected subsets.

    Each subset is ``((S_b - removed) | must_keep) | (included - must_exclude)``.
    Subsets left empty are dropped with a warning.
    """
    n = baseline.n_features
    universe = frozenset(range(n))
    for label, s in (("must-keep", constraints.must_keep), ("must-exclude", constraints.must_exclude)):
        if not s <= universe:
            raise ConfigError(f"{label} features {sorted(s - universe)} are not in the feature set")
    clash = constraints.must_exclude & baseline.baseline
    if clash:
        # must-exclude features are ones the original selection left out
        raise ConfigError(f"must-exclude features {sorted(clash)} are in the baseline set")
    if sorted(ranking.order) != list(range(len(partition))):
        raise ValidationError("ranking is not a permutation of the partition's groups")

    S_b = baseline.baseline
    removals = {r: removal_pool(ranking, S_b, partition, r, grid.seed) for r in grid.removal_budgets()}
    inclusions = {
        c: inclusion_pool(ranking, S_b, partition, c, grid.inclusions_per_group, grid.seed)
        for c in grid.inclusion_budgets()
    }
    out = []
    for r, removed in removals.items():
        for c, included in inclusions.items():
            features = ((S_b - removed) | constraints.must_keep) | (included - constraints.must_exclude)
            if not features:
                warnings.warn(f"subset r={r} c={c} is empty after constraints; dropped", stacklevel=2)
                continue
            out.append(ReselectedSubset(r, c, frozenset(features)))
    return out


def evaluate_subset(features, table, labels, scorer, config: TrainConfig, data_split):
    """Train on the split's training rows and score the test rows.

    Returns ``(test AUC, SecondaryScore)`` computed from the retrained model.
    """
    model = train(table, labels, features, config, rows=data_split.train)
    X_test = table.matrix()[data_split.test]
    proba = model.predict_proba(X_test)
    return auc(proba, np.asarray(labels)[data_split.test]), scorer(proba, data_split.test)


def run_splits(labels, runs, seed, test_fraction=0.2):
    return [split(None, labels, None, test_fraction, derive_seed(seed, "split", run)) for run in range(runs)]


_WORKER = {}


def _init_worker(table, labels, scorer, config, splits):
    _WORKER.update(table=table, labels=labels, scorer=scorer, config=config, splits=splits)


def _evaluate_job(features):
    w = _WORKER
    try:
        return [evaluate_subset(features, w["table"], w["labels"], w["scorer"], w["config"], s)
                for s in w["splits"]]
    except RefreshError as exc:
        return exc


def evaluate_candidates(subsets, table: FeatureTable, labels, scorer, config: TrainConfig = TrainConfig(),
                        runs=3, seed=0, test_fraction=0.2, baseline=None, jobs=1, failures=None):
    """Retrain every subset on ``runs`` seeded splits and aggregate true metrics.

    Standard deviations are population (ddof=0) so a single run reports 0.
    Split seeds depend only on ``(seed, run)``, so every subset sees the same
    splits and results do not depend on ``jobs``. A subset whose training
    fails is skipped; ``(subset_id, message)`` is appended to ``failures``
    when a list is supplied.
    """
    if runs < 1:
        raise ConfigError(f"runs must be >= 1, got {runs}")
    splits = run_splits(labels, runs, seed, test_fraction)
    jobs_in = []
    for sub in subsets:
        if not sub.features:
            warnings.warn(f"subset {sub.subset_id} is empty; skipped", stacklevel=2)
            continue
        jobs_in.append(sub)

    if jobs > 1 and len(jobs_in) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(table, labels, scorer, config, splits)) as ex:
            per_subset = list(ex.map(_evaluate_job, [s.features for s in jobs_in], chunksize=4))
    else:
        _init_worker(table, labels, scorer, config, splits)
        try:
            per_subset = [_evaluate_job(s.features) for s in jobs_in]
        finally:
            _WORKER.clear()

    base_set = None if baseline is None else baseline.baseline
    results = []
    for sub, evals in zip(jobs_in, per_subset):
        if isinstance(evals, Exception):
            logger.warning("subset %s failed: %s", sub.subset_id, evals)
            if failures is not None:
                failures.append((sub.subset_id, str(evals)))
            continue
        aucs = np.array([a for a, _ in evals])
        values = np.array([s.value for _, s in evals])
        raws = np.array([s.raw for _, s in evals])
        results.append(CandidateResult(
            subset_id=sub.subset_id,
            features=sub.features,
            n_removed=len(base_set - sub.features) if base_set is not None else sub.removals,
            n_included=len(sub.features - base_set) if base_set is not None else sub.inclusions,
            auc_mean=float(aucs.mean()), auc_std=float(aucs.std()),
            secondary_kind=evals[0][1].kind,
            secondary_mean=float(values.mean()), secondary_std=float(values.std()),
            secondary_raw_mean=float(raws.mean()), secondary_raw_std=float(raws.std()),
            runs=runs,
            is_baseline=(sub.removals, sub.inclusions) == (0, 0),
        ))
    return results


def dominates(a, b):
    return (a.auc_mean >= b.auc_mean and a.secondary_mean >= b.secondary_mean
            and (a.auc_mean > b.auc_mean or a.secondary_mean > b.secondary_mean))


def pareto_frontier(results):
    """Non-dominated candidates under (max AUC, max secondary), by AUC descending."""
    if not results:
        raise ValidationError("pareto_frontier needs at least one result")
    aucs = np.array([r.auc_mean for r in results])
    secs = np.array([r.secondary_mean for r in results])
    order = np.argsort(-aucs, kind="stable")
    front = []
    best_sec = -np.inf
    # sweep by AUC descending; ties on AUC are resolved within the block
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and aucs[order[j]] == aucs[order[i]]:
            j += 1
        block = order[i:j]
        block_best = secs[block].max()
        for k in block:
            if secs[k] > best_sec and secs[k] == block_best:
                front.append(results[k])
        best_sec = max(best_sec, block_best)
        i = j
    return front


def mark_frontier(results):
    front = {id(r) for r in pareto_frontier(results)}
    for r in results:
        r.on_pareto_frontier = id(r) in front
    return results


def _fmt(x):
    return repr(float(x))


def results_to_csv(results, path=None):
    buf = io.StringIO()
    buf.write(RESULTS_HEADER_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_COLUMNS)
    for r in results:
        w.writerow([
            r.subset_id, r.n_removed, r.n_included, r.n_features, _fmt(r.auc_mean), _fmt(r.auc_std),
            r.secondary_kind, _fmt(r.secondary_mean), _fmt(r.secondary_std), int(r.is_baseline),
            int(r.on_pareto_frontier), _fmt(r.secondary_raw_mean), _fmt(r.secondary_raw_std),
        ])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def results_from_csv(path):
    """Read a results CSV back; raises InputFormatError on anything malformed."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    if not lines or not rows:
        raise InputFormatError(f"{path}: no result rows")
    required = set(RESULTS_COLUMNS[:11])
    missing = required - set(rows[0])
    if missing:
        raise InputFormatError(f"{path}: missing columns {sorted(missing)}")
    out = []
    try:
        for row in rows:
            n_feat = int(row["n_features"])
            out.append(CandidateResult(
                subset_id=row["subset_id"], features=frozenset(range(n_feat)),
                n_removed=int(row["n_removed"]), n_included=int(row["n_included"]),
                auc_mean=float(row["auc_mean"]), auc_std=float(row["auc_std"]),
                secondary_kind=row["secondary_kind"],
                secondary_mean=float(row["secondary_mean"]), secondary_std=float(row["secondary_std"]),
                secondary_raw_mean=float(row.get("secondary_raw_mean") or "nan"),
                secondary_raw_std=float(row.get("secondary_raw_std") or "nan"),
                is_baseline=row["is_baseline"] == "1",
                on_pareto_frontier=row["on_pareto_frontier"] == "1",
            ))
    except (TypeError, ValueError, KeyError) as exc:
        raise InputFormatError(f"{path}: malformed row ({exc})") from exc
    return out


# ---------------------------------------------------------------------------
# approximation benchmark


@dataclass
class BenchmarkReport:
    group_rows: list = field(default_factory=list)      # (group_id, size, anticipated_auc, actual_auc)
    singleton_rows: list = field(default_factory=list)  # (group_id, feature, anticipated_auc, actual_auc)
    sweep_rows: list = field(default_factory=list)      # (tau, n_groups, max_abs_diff, mean_abs_diff)

    @staticmethod
    def _errors(rows):
        return np.array([r[2] - r[3] for r in rows])

    def group_error(self):
        return float(np.abs(self._errors(self.group_rows)).mean())

    def singleton_error(self):
        return float(np.abs(self._errors(self.singleton_rows)).mean())

    def singleton_bias(self):
        """Mean (anticipated - actual) AUC in single-feature mode."""
        return float(self._errors(self.singleton_rows).mean())


class _Retrainer:
    """Caches test AUCs of retrained models keyed by feature subset."""

    def __init__(self, table, labels, config, data_split):
        self.table, self.labels, self.config, self.split = table, np.asarray(labels), config, data_split
        self.cache = {}

    def auc_without(self, removed):
        keep = frozenset(range(self.table.n_features)) - frozenset(removed)
        if keep not in self.cache:
            if keep:
                model = train(self.table, self.labels, keep, self.config, rows=self.split.train)
            else:
                model = train_intercept(self.labels, self.split.train, self.table.n_features)
            proba = model.predict_proba(self.table.matrix()[self.split.test])
            self.cache[keep] = auc(proba, self.labels[self.split.test])
        return self.cache[keep]


def _group_mode(partition, shap, margins, y_test, retrainer):
    rows = []
    for gid, g in enumerate(partition.groups):
        anticipated = auc(anticipated_without(shap, margins, g).proba, y_test)
        rows.append((gid, len(g), anticipated, retrainer.auc_without(g)))
    return rows


def benchmark_approximation(table: FeatureTable, labels, partition: GroupPartition,
                            config: TrainConfig = TrainConfig(), taus=(), seed=0,
                            test_fraction=0.2, resolution=1.0) -> BenchmarkReport:
    """Compare anticipated AUCs against retrained-model AUCs.

    Group mode removes each whole group; single-feature mode removes one
    seeded-random feature per group. For every threshold in ``taus`` the
    features are regrouped and the group-mode errors summarised.
    """
    labels = np.asarray(labels)
    data_split = split(None, labels, None, test_fraction, derive_seed(seed, "split", 0))
    full = train(table, labels, range(table.n_features), config, rows=data_split.train)
    bg = background_means(table, data_split.train)
    shap = linear_shap(full, table, bg, rows=data_split.test)
    margins = full.margin(table.matrix()[data_split.test])
    y_test = labels[data_split.test]
    retrainer = _Retrainer(table, labels, config, data_split)

    report = BenchmarkReport()
    report.group_rows = _group_mode(partition, shap, margins, y_test, retrainer)
    rng = np.random.default_rng(derive_seed(seed, "singleton"))
    for gid, g in enumerate(partition.groups):
        f = int(rng.choice(g))
        anticipated = auc(anticipated_without(shap, margins, [f]).proba, y_test)
        report.singleton_rows.append((gid, f, anticipated, retrainer.auc_without([f])))
    for tau in taus:
        part = group_features(table, tau, seed=partition.seed, resolution=resolution)
        rows = _group_mode(part, shap, margins, y_test, retrainer)
        diffs = np.abs([r[2] - r[3] for r in rows])
        report.sweep_rows.append((float(tau), len(part), float(diffs.max()), float(diffs.mean())))
    return report
