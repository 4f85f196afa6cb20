"""Command-line front end: ``refresh {group,reselect,bench,report,synth}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 malformed
downstream input (e.g. a results CSV handed to ``report``).
"""

from __future__ import annotations

import argparse
import collections
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from ._seeds import derive_seed
from .attribution import ShapMatrix
from .config import RunConfig, from_mapping, load_config
from .errors import ConfigError, DataError, InputFormatError, RefreshError, TrainingError
from .grouping import group_features
from .pipeline import run_reselection, stage_seeds
from .reselect import (
    ConstraintSets, BaselineSelection, benchmark_approximation, dominates, pareto_frontier,
    results_from_csv, results_to_csv,
)
from .secondary import make_scorer
from .synthetic import SyntheticSpec, make_synthetic, write_csv
from .tabular import load_csv, preprocess

logger = logging.getLogger("refresh")

SCHEMA_VERSION = 1
EXIT_CONFIG, EXIT_DATA, EXIT_INPUT = 2, 3, 4


def _header(kind):
    return f"# refresh-schema: {SCHEMA_VERSION} {kind}\n"


def _write_json(path, doc):
    Path(path).write_text(json.dumps({"schema_version": SCHEMA_VERSION, **doc}, indent=2) + "\n")


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for key in ("dataset", "seed", "out", "jobs", "secondary", "tau"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return from_mapping(overrides, cfg).validate()


def _load_data(cfg: RunConfig):
    if not cfg.dataset:
        raise ConfigError("dataset: no dataset path given")
    path = Path(cfg.dataset)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")
    table, labels, vault = load_csv(path, cfg.schema())
    table, report = preprocess(table, cfg.categorical)
    if table.n_features == 0:
        raise DataError("no usable feature columns after preprocessing")
    return table, labels, vault, report


def _resolve_names(names, table, report, field):
    """Feature names (or categorical source columns) -> column indices."""
    out = set()
    for name in names:
        if name in table.names:
            out.add(table.index(name))
        elif name in report.onehot:
            out.update(table.index(e) for e in report.onehot[name])
        else:
            raise ConfigError(f"{field}: unknown feature {name!r}")
    return out


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def cmd_group(args):
    cfg = _resolve_config(args)
    table, _, _, _ = _load_data(cfg)
    seed = stage_seeds(cfg.seed)["louvain"]
    part = group_features(table, cfg.tau, seed=seed, resolution=cfg.resolution)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    part.save(out / "partition.json")
    sizes = collections.Counter(len(g) for g in part.groups)
    print(f"{len(part)} groups over {table.n_features} features (tau={cfg.tau})")
    for size in sorted(sizes):
        print(f"  size {size:3d}: {sizes[size]} group(s)")
    print(f"wrote {out / 'partition.json'}")
    return 0


def cmd_reselect(args):
    cfg = _resolve_config(args)
    table, labels, vault, report = _load_data(cfg)
    # every name is validated before any model is trained
    constraints = ConstraintSets(
        _resolve_names(cfg.must_keep, table, report, "must_keep"),
        _resolve_names(cfg.must_exclude, table, report, "must_exclude"),
    )
    baseline = None
    if cfg.baseline:
        baseline = BaselineSelection.from_features(
            _resolve_names(cfg.baseline, table, report, "baseline"), table.n_features, rule="configured")
    if cfg.k is not None and cfg.k > table.n_features:
        raise ConfigError(f"k: {cfg.k} exceeds the {table.n_features} available features")
    attributions = None
    if cfg.attributions:
        attributions = ShapMatrix.from_csv(cfg.attributions, names=table.names)
    scorer = make_scorer(cfg.secondary, vault, cfg.delta)
    jobs = cfg.jobs or os.cpu_count() or 1

    run = run_reselection(
        table, labels, scorer, tau=cfg.tau, k=cfg.k, baseline=baseline, grid=cfg.grid(),
        constraints=constraints, config=cfg.train_config(), runs=cfg.runs, seed=cfg.seed,
        test_fraction=cfg.test_fraction, resolution=cfg.resolution, attributions=attributions, jobs=jobs,
    )

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    results_to_csv(run.results, out / "results.csv")
    names = table.names
    _write_json(out / "subsets.json", {
        "subsets": {r.subset_id: [names[i] for i in sorted(r.features)] for r in run.results},
    })
    run.partition.save(out / "partition.json")
    manifest_cfg = cfg.to_dict()
    manifest_cfg.update(jobs=None, k=len(run.baseline.baseline) if cfg.baseline is None else None)
    _write_json(out / "manifest.json", {
        "version": __version__,
        "config": manifest_cfg,
        "seeds": run.seeds,
        "dataset_sha256": _sha256(cfg.dataset),
        "baseline": [names[i] for i in sorted(run.baseline.baseline)],
        "must_keep": [names[i] for i in sorted(constraints.must_keep)],
        "must_exclude": [names[i] for i in sorted(constraints.must_exclude)],
        "ranking": [{"group": [names[i] for i in run.partition.groups[gid]], "anticipated": s.value}
                    for gid, s in run.ranking.entries],
    })
    if run.failures:
        with (out / "failures.log").open("w") as fh:
            for subset_id, msg in run.failures:
                fh.write(f"{subset_id}\t{msg}\n")
        print(f"{len(run.failures)} candidate(s) failed; see {out / 'failures.log'}", file=sys.stderr)

    base = next((r for r in run.results if r.is_baseline), None)
    print(f"{len(run.results)} candidates, {len(run.partition)} groups, baseline of {len(run.baseline.baseline)}")
    if base is not None:
        print(f"baseline: auc={base.auc_mean:.4f} {cfg.secondary}={base.secondary_mean:.4f}")
    print(f"wrote {out / 'results.csv'}")
    return 0


def cmd_bench(args):
    cfg = _resolve_config(args)
    table, labels, _, _ = _load_data(cfg)
    part = group_features(table, cfg.tau, seed=stage_seeds(cfg.seed)["louvain"], resolution=cfg.resolution)
    rep = benchmark_approximation(table, labels, part, cfg.train_config(), taus=cfg.bench_taus,
                                  seed=derive_seed(cfg.seed, "bench"), test_fraction=cfg.test_fraction,
                                  resolution=cfg.resolution)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "bench_approximation.csv").open("w", newline="") as fh:
        fh.write(_header("bench-approximation"))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "group_id", "group_size", "removed", "anticipated_auc", "actual_auc", "abs_diff"])
        for gid, size, ant, act in rep.group_rows:
            removed = ";".join(table.names[i] for i in part.groups[gid])
            w.writerow(["group", gid, size, removed, repr(ant), repr(act), repr(abs(ant - act))])
        for gid, f, ant, act in rep.singleton_rows:
            w.writerow(["single", gid, len(part.groups[gid]), table.names[f], repr(ant), repr(act),
                        repr(abs(ant - act))])
    with (out / "bench_sweep.csv").open("w", newline="") as fh:
        fh.write(_header("bench-sweep"))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "n_groups", "max_abs_diff", "mean_abs_diff"])
        for tau, n_groups, mx, mean in rep.sweep_rows:
            w.writerow([repr(tau), n_groups, repr(mx), repr(mean)])
    print(f"group removal:  mean |anticipated - actual| AUC = {rep.group_error():.5f}")
    print(f"single removal: mean |anticipated - actual| AUC = {rep.singleton_error():.5f}"
          f" (mean signed {rep.singleton_bias():+.5f})")
    for tau, n_groups, mx, _ in rep.sweep_rows:
        print(f"  tau={tau:.2f}: {n_groups} groups, max diff {mx:.5f}")
    print(f"wrote {out / 'bench_approximation.csv'} and {out / 'bench_sweep.csv'}")
    return 0


def cmd_report(args):
    path = Path(args.results)
    results = results_from_csv(path)
    base = next((r for r in results if r.is_baseline), None)
    if base is None:
        raise InputFormatError(f"{path}: no baseline row")
    view = [r for r in results if r.n_features == base.n_features] if args.equal_size else results
    front = pareto_frontier(view)
    on_front = {id(r) for r in front}
    kind = base.secondary_kind

    def line(r):
        return (f"{r.subset_id}: auc={r.auc_mean:.4f}±{r.auc_std:.4f} {kind}={r.secondary_mean:.4f}"
                f"±{r.secondary_std:.4f} n_features={r.n_features}")

    print(f"{len(view)} candidates{' with the baseline feature count' if args.equal_size else ''}")
    print("baseline        " + line(base))
    best_sec = max(view, key=lambda r: (r.secondary_mean, r.auc_mean))
    best_auc = max(view, key=lambda r: (r.auc_mean, r.secondary_mean))
    print("best secondary  " + line(best_sec))
    print("best AUC        " + line(best_auc))
    print(f"pareto set ({len(front)}):")
    for r in front:
        flag = "  dominates baseline" if dominates(r, base) else ""
        print("  " + line(r) + flag)
    dominating = [r for r in view if dominates(r, base)]
    if dominating:
        print(f"{len(dominating)} candidate(s) dominate baseline")

    out = Path(args.out) if args.out else path.parent
    out.mkdir(parents=True, exist_ok=True)
    name = "scatter_equal_size.csv" if args.equal_size else "scatter.csv"
    with (out / name).open("w", newline="") as fh:
        fh.write(_header("scatter"))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["auc", "secondary", "n_features", "on_frontier"])
        for r in view:
            w.writerow([repr(r.auc_mean), repr(r.secondary_mean), r.n_features, int(id(r) in on_front)])
    print(f"wrote {out / name}")
    return 0


def cmd_synth(args):
    spec = SyntheticSpec(n_rows=args.rows, n_groups=args.groups, group_size=args.group_size,
                         n_independent=args.independent, proxy_size=args.proxy_size, seed=args.seed)
    data = make_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(data, out / "data.csv")
    k = args.k if args.k is not None else (data.table.n_features * 2) // 3
    (out / "config.toml").write_text(
        "# REFRESH run configuration for the bundled synthetic dataset\n"
        'dataset = "data.csv"\n'
        'label = "label"\n'
        'sensitive = "sensitive"\n'
        'privileged = "1"\n'
        'reference = "0"\n'
        "tau = 0.7\n"
        f"k = {k}\n"
        "max_removals = 50\nmax_inclusions = 50\nstep = 5\ninclusions_per_group = 3\n"
        'secondary = "fairness"\n'
        "runs = 3\n"
        f"seed = {args.seed}\n"
        'out = "out"\n'
    )
    print(f"wrote {out / 'data.csv'} ({spec.n_rows} rows, {data.table.n_features} features) and {out / 'config.toml'}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="refresh", description="SHAP-guided feature reselection")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config or JSON run manifest")
        p.add_argument("--dataset", help="CSV dataset (overrides config)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, help="parallel workers for candidate evaluation")
        p.add_argument("--secondary", choices=["fairness", "robustness"])
        p.add_argument("--tau", type=float, help="correlation threshold")

    common(p := sub.add_parser("group", help="group correlated features"))
    p.set_defaults(func=cmd_group)
    common(p := sub.add_parser("reselect", help="run the reselection search"))
    p.set_defaults(func=cmd_reselect)
    common(p := sub.add_parser("bench", help="benchmark anticipated vs retrained AUC"))
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="summarise a results CSV")
    p.add_argument("results")
    p.add_argument("--equal-size", action="store_true", help="only candidates with the baseline's feature count")
    p.add_argument("--out", help="directory for the scatter CSV (default: next to the results)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a synthetic dataset and matching config")
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int, default=2000)
    p.add_argument("--groups", type=int, default=20)
    p.add_argument("--group-size", type=int, default=4)
    p.add_argument("--independent", type=int, default=10)
    p.add_argument("--proxy-size", type=int, default=3)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, TrainingError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InputFormatError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RefreshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
