"""``datamin`` command line: minimize, sweep, score, synth, baseline.

Settings come from an optional JSON config (``--config``); any flag given on
the command line wins over the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

from datamin import baselines, synth
from datamin.attribution import METHODS, score_features
from datamin.forest import ForestConfig
from datamin.report import (
    DEFAULT_THRESHOLDS,
    CurvePoint,
    TradeoffReport,
    TradeoffRow,
    curve_export,
    report_meta,
    threshold_sweep,
)
from datamin.solvers import (
    GreedyStrategy,
    ThresholdPolicy,
    evaluate_subsets,
    exhaustive_search,
    greedy_select,
    hybrid_minimize,
    write_log,
)
from datamin.tabular import Dataset, FeatureSubset, SplitSpec, load_csv, write_csv

SOLVERS = ("exhaustive", "greedy", "hybrid")
TRANSFORMS = ("hash", "pca", "dp")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    data: str | None = None
    task_column: str = "task"
    user_column: str = "user"
    na_policy: str = "drop_rows"
    method: str = "exhaustive"
    scoring: str = "shap"
    strategy: str = "ctv_asc"
    keep: int = 12
    top_k: int | None = None
    V: float | None = None
    threshold: float = 0.01
    thresholds: list = field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    ks: list | None = None
    buckets: int = 16
    components: int = 2
    epsilon: float = 1.0
    test_fraction: float = 0.3
    split_seed: int = 0
    stratify_on: str = "task"
    n_trees: int = 100
    max_depth: int | None = None
    seed: int = 0
    permutations: int = 32
    shap_seed: int = 0
    threads: int | None = None
    out: str = "datamin-out"
    timestamp: bool = False

    @property
    def split(self) -> SplitSpec:
        return SplitSpec(self.test_fraction, self.split_seed, self.stratify_on)

    @property
    def forest(self) -> ForestConfig:
        return ForestConfig(n_trees=self.n_trees, max_depth=self.max_depth, seed=self.seed)

    def validate(self) -> None:
        if self.method not in SOLVERS + TRANSFORMS:
            raise UsageError(f"unknown method {self.method!r}; expected one of {SOLVERS + TRANSFORMS}")
        if self.scoring not in METHODS:
            raise UsageError(f"unknown scoring {self.scoring!r}; expected one of {METHODS}")
        if not 0.0 <= self.threshold <= 1.0:
            raise UsageError(f"threshold must lie in [0, 1], got {self.threshold}")


_NESTED = {
    "split": {"test_fraction": "test_fraction", "seed": "split_seed", "stratify_on": "stratify_on"},
    "forest": {"n_trees": "n_trees", "max_depth": "max_depth", "seed": "seed"},
    "shap": {"permutations": "permutations", "seed": "shap_seed"},
}


def _flatten(doc: dict) -> dict:
    """Accept both flat keys and the nested {split, forest, shap, method: {name: {...}}} form."""
    flat = {}
    for key, value in doc.items():
        if key in _NESTED and isinstance(value, dict):
            for sub, target in _NESTED[key].items():
                if sub in value:
                    flat[target] = value[sub]
        elif key == "method" and isinstance(value, dict):
            if len(value) != 1:
                raise UsageError("config must name exactly one method")
            (name, opts), = value.items()
            flat["method"] = name
            flat.update(opts or {})
        else:
            flat[key] = value
    known = {f.name for f in fields(RunConfig)}
    unknown = set(flat) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return flat


def build_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(_flatten(json.loads(Path(args.config).read_text())))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _progress(done: int, total: int) -> None:
    step = max(1, total // 20)
    if total >= 64 and (done % step == 0 or done == total):
        print(f"evaluated {done}/{total} subsets", file=sys.stderr)


def _load(cfg: RunConfig) -> Dataset:
    if not cfg.data:
        raise UsageError("no dataset given (--data or config 'data')")
    return load_csv(cfg.data, cfg.task_column, cfg.user_column, cfg.na_policy)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _meta(ds: Dataset, cfg: RunConfig, method: dict, full=None, base="full_feature_set") -> dict:
    meta = report_meta(ds, method, cfg.split, cfg.forest, full, base)
    meta["dataset"]["path"] = Path(cfg.data).name if cfg.data else None
    return _stamp(meta) if cfg.timestamp else meta


def _stamp(meta: dict) -> dict:
    # the only non-reproducible field; fixture comparisons drop it
    meta["generated_at"] = datetime.now(timezone.utc).isoformat()
    return meta


def _summary(row: TradeoffRow) -> str:
    rel = "N/A" if row.relative_effectiveness is None else f"{row.relative_effectiveness:.3f}"
    return (f"accuracy={row.accuracy:.4f} identifiability={row.identifiability:.4f} "
            f"rel_eff={rel} n_features={row.n_features}")


def _full_eval(ds: Dataset, cfg: RunConfig):
    return evaluate_subsets(ds, [FeatureSubset.full(ds.n_features)], cfg.split, cfg.forest, threads=1)[0]


def _greedy_strategy(cfg: RunConfig, k: int | None = None) -> GreedyStrategy:
    if k is not None or cfg.top_k is not None:
        return GreedyStrategy(cfg.strategy, "top_k", k=k if k is not None else cfg.top_k)
    if cfg.V is None:
        raise UsageError("greedy needs either top_k or V")
    return GreedyStrategy(cfg.strategy, "utility_sum", V=cfg.V)


def cmd_minimize(cfg: RunConfig) -> int:
    ds = _load(cfg)
    out = _outdir(cfg)
    policy = ThresholdPolicy(cfg.threshold)
    full = _full_eval(ds, cfg)
    if cfg.method == "exhaustive":
        res = exhaustive_search(ds, None, policy, cfg.split, cfg.forest, threads=cfg.threads, progress=_progress)
        chosen, method = res.evaluation, res.method
        write_log(res.log, ds, out / "evaluations.csv")
    elif cfg.method == "hybrid":
        res = hybrid_minimize(ds, policy, cfg.split, cfg.forest, cfg.scoring, cfg.keep,
                              permutations=cfg.permutations, shap_seed=cfg.shap_seed,
                              threads=cfg.threads, progress=_progress)
        chosen, method = res.evaluation, res.method
        write_log(res.log, ds, out / "evaluations.csv")
    elif cfg.method == "greedy":
        scores = score_features(cfg.scoring, ds, None, cfg.split, cfg.forest, cfg.permutations, cfg.shap_seed)
        subset = greedy_select(scores, _greedy_strategy(cfg))
        chosen = evaluate_subsets(ds, [subset], cfg.split, cfg.forest, threads=1)[0]
        method = {"solver": "greedy", "scoring": cfg.scoring, "order_by": cfg.strategy,
                  "top_k": cfg.top_k, "V": cfg.V}
    else:
        raise UsageError(f"minimize supports {SOLVERS}; use 'baseline' for {cfg.method}")
    row = TradeoffRow.of(chosen, cfg.threshold, full)
    report = TradeoffReport(TradeoffRow.of(full, None, None), (row,), _meta(ds, cfg, method, full))
    report.write(out / "report.json")
    (out / "chosen_features.txt").write_text("".join(n + "\n" for n in chosen.subset.names(ds)))
    print(_summary(row))
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    ds = _load(cfg)
    out = _outdir(cfg)
    if cfg.method in ("exhaustive", "hybrid"):
        report = threshold_sweep(ds, cfg.thresholds, cfg.split, cfg.forest, solver=cfg.method,
                                 scoring=cfg.scoring, keep=cfg.keep, permutations=cfg.permutations,
                                 threads=cfg.threads, progress=_progress)
        if cfg.timestamp:
            report = TradeoffReport(report.baseline, report.rows, _stamp(dict(report.meta)))
        report.write(out / "report.json")
        curve_export(report, out / "curve.csv")
        print(report.table())
        return 0

    full = _full_eval(ds, cfg)
    points = []
    if cfg.method == "greedy":
        scores = score_features(cfg.scoring, ds, None, cfg.split, cfg.forest, cfg.permutations, cfg.shap_seed)
        ks = cfg.ks or list(range(1, ds.n_features + 1))
        for k in ks:
            subset = greedy_select(scores, _greedy_strategy(cfg, k))
            e = evaluate_subsets(ds, [subset], cfg.split, cfg.forest, threads=1)[0]
            points.append((k, CurvePoint(len(subset), e.task_accuracy, e.identifiability,
                                         f"greedy-{cfg.scoring}-{cfg.strategy}")))
    else:
        defaults = {"hash": [cfg.buckets], "pca": [cfg.components], "dp": [cfg.epsilon]}
        for k in cfg.ks or defaults[cfg.method]:
            tds = _transform(ds, cfg, k)
            e = _full_eval(tds, cfg)
            points.append((k, CurvePoint(tds.n_features, e.task_accuracy, e.identifiability,
                                         f"{cfg.method}-{k:g}")))
    curve_export([p for _, p in points], out / "curve.csv", full.task_accuracy, full.identifiability)
    doc = {"meta": _meta(ds, cfg, {"solver": cfg.method}, full),
           "points": [dict(param=k, **asdict(p)) for k, p in points]}
    (out / "sweep.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for k, p in points:
        print(f"{cfg.method} {k}: accuracy={p.accuracy:.4f} identifiability={p.identifiability:.4f} "
              f"n_features={p.n_features}")
    return 0


def _transform(ds: Dataset, cfg: RunConfig, param) -> Dataset:
    if cfg.method == "hash":
        return baselines.hash_features(ds, baselines.HashSpec(int(param)))
    if cfg.method == "pca":
        return baselines.pca_transform(ds, baselines.PcaSpec(int(param)))
    if cfg.method == "dp":
        return baselines.dp_noise(ds, baselines.DpSpec(float(param), cfg.seed))
    raise UsageError(f"{cfg.method} is not a baseline transform")


def cmd_baseline(cfg: RunConfig) -> int:
    ds = _load(cfg)
    out = _outdir(cfg)
    param = {"hash": cfg.buckets, "pca": cfg.components, "dp": cfg.epsilon}.get(cfg.method)
    if param is None:
        raise UsageError(f"baseline supports {TRANSFORMS}, got {cfg.method!r}")
    tds = _transform(ds, cfg, param)
    write_csv(tds, out / f"{cfg.method}.csv", cfg.task_column, cfg.user_column)
    full, e = _full_eval(ds, cfg), _full_eval(tds, cfg)
    print(_summary(TradeoffRow.of(e, None, full)))
    return 0


def cmd_score(cfg: RunConfig) -> int:
    ds = _load(cfg)
    out = _outdir(cfg)
    table = score_features(cfg.scoring, ds, None, cfg.split, cfg.forest, cfg.permutations, cfg.shap_seed)
    table.write(out / f"scores_{cfg.scoring}.csv")
    table.write(out / f"scores_{cfg.scoring}.json")
    print(table.to_csv(), end="")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    base = synth.PRESETS[args.preset] if args.preset else synth.SynthSpec()
    overrides = {k: getattr(args, k) for k in ("n_rows", "n_classes", "n_users", "task_only", "user_only",
                                               "shared", "noise", "signal_strength", "seed")
                 if getattr(args, k) is not None}
    spec = synth.SynthSpec(**dict(asdict(base), **overrides))
    ds = synth.generate(spec)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(ds, out)
    print(f"wrote {ds.rows} rows x {ds.n_features} features to {out}", file=sys.stderr)
    return 0


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; flags override its fields")
    p.add_argument("--data")
    p.add_argument("--task-column", dest="task_column")
    p.add_argument("--user-column", dest="user_column")
    p.add_argument("--na-policy", dest="na_policy", choices=("drop_rows", "error"))
    p.add_argument("--method", choices=SOLVERS + TRANSFORMS)
    p.add_argument("--scoring", choices=METHODS)
    p.add_argument("--strategy", choices=("utility_desc", "identifiability_asc", "ctv_asc"))
    p.add_argument("--keep", type=int)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--V", dest="V", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--thresholds", type=_floats, help="comma-separated list")
    p.add_argument("--ks", type=_floats, help="comma-separated sweep values for greedy/baselines")
    p.add_argument("--buckets", type=int)
    p.add_argument("--components", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--stratify-on", dest="stratify_on", choices=("task", "user", "joint"))
    p.add_argument("--n-trees", dest="n_trees", type=int)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--permutations", type=int)
    p.add_argument("--shap-seed", dest="shap_seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--timestamp", action="store_true", default=None,
                   help="record meta.generated_at in the report")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="datamin", description="Feature minimization against re-identification")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("minimize", "choose a feature subset at one threshold"),
                            ("sweep", "tradeoff table over thresholds or a parameter list"),
                            ("score", "per-feature utility/identifiability scores"),
                            ("baseline", "apply hashing, PCA or DP noise and evaluate it")):
        _add_run_flags(sub.add_parser(name, help=help_text))
    s = sub.add_parser("synth", help="write a synthetic dataset CSV")
    s.add_argument("--preset", choices=sorted(synth.PRESETS))
    for flag in ("n-rows", "n-classes", "n-users", "task-only", "user-only", "shared", "noise", "seed"):
        s.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=int)
    s.add_argument("--signal-strength", dest="signal_strength", type=float)
    s.add_argument("--output", "-o", required=True)
    return parser


COMMANDS = {"minimize": cmd_minimize, "sweep": cmd_sweep, "score": cmd_score, "baseline": cmd_baseline}


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except KeyError as exc:
        print(f"datamin: error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
    except (UsageError, ValueError, OSError) as exc:
        print(f"datamin: error: {exc}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
