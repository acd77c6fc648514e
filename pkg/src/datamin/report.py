"""Relative effectiveness, threshold sweeps and tradeoff curves."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from datamin.attribution import ScoreTable
from datamin.forest import ForestConfig
from datamin.solvers import (
    DEFAULT_KEEP,
    MinimizationResult,
    SubsetEvaluation,
    ThresholdPolicy,
    evaluate_subsets,
    exhaustive_search,
    hybrid_minimize,
)
from datamin.tabular import Dataset, FeatureSubset, SplitSpec

REPORT_VERSION = 1
DEFAULT_THRESHOLDS = (0.0, 0.01, 0.03, 0.1, 0.3, 1.0)
CURVE_COLUMNS = ("n_features", "accuracy_loss", "identifiability_reduction", "method")


def relative_effectiveness(acc_i: float, ident_i: float, acc_0: float, ident_0: float) -> float | None:
    """ln((ident_i - ident_0) / (acc_i - acc_0)); None when undefined.

    Undefined means an unchanged accuracy or a non-positive ratio. Works the
    same on fractions and percentages.
    """
    d_acc = acc_i - acc_0
    if d_acc == 0:
        return None
    ratio = (ident_i - ident_0) / d_acc
    if not ratio > 0:
        return None
    return math.log(ratio)


@dataclass(frozen=True)
class TradeoffRow:
    threshold: float | None
    accuracy: float
    identifiability: float
    relative_effectiveness: float | None
    n_features: int
    subset: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "accuracy": self.accuracy, "identifiability": self.identifiability,
                "rel_eff": self.relative_effectiveness, "n_features": self.n_features,
                "subset": list(self.subset)}

    @classmethod
    def from_dict(cls, doc: dict) -> "TradeoffRow":
        return cls(doc["threshold"], doc["accuracy"], doc["identifiability"], doc["rel_eff"],
                   doc["n_features"], tuple(doc.get("subset", ())))

    @classmethod
    def of(cls, e: SubsetEvaluation, threshold: float | None, ref: SubsetEvaluation | None) -> "TradeoffRow":
        r = None if ref is None else relative_effectiveness(
            e.task_accuracy, e.identifiability, ref.task_accuracy, ref.identifiability)
        return cls(threshold, e.task_accuracy, e.identifiability, r, len(e.subset), e.subset.indices)


@dataclass(frozen=True)
class TradeoffReport:
    baseline: TradeoffRow
    rows: tuple[TradeoffRow, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ts = [r.threshold for r in self.rows]
        if ts != sorted(ts):
            raise ValueError("report rows must be sorted by threshold")

    def to_dict(self) -> dict:
        return {"version": REPORT_VERSION, "meta": self.meta, "baseline": self.baseline.to_dict(),
                "rows": [r.to_dict() for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "TradeoffReport":
        if doc.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {doc.get('version')!r}")
        return cls(TradeoffRow.from_dict(doc["baseline"]),
                   tuple(TradeoffRow.from_dict(r) for r in doc["rows"]), doc.get("meta", {}))

    @classmethod
    def from_json(cls, text: str) -> "TradeoffReport":
        return cls.from_dict(json.loads(text))

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_json())
        return path

    def table(self) -> str:
        """Plain-text table in the Thr/Acc/Ident/Rel.Eff/#Feat layout."""
        lines = [f"{'Thr.':>6}  {'Acc.':>8}  {'Ident.':>8}  {'Rel. Eff.':>9}  {'# Feat.':>7}"]
        for r in self.rows:
            rel = "N/A" if r.relative_effectiveness is None else f"{r.relative_effectiveness:.3f}"
            lines.append(f"{r.threshold:>6g}  {r.accuracy:>8.2%}  {r.identifiability:>8.2%}  {rel:>9}  "
                         f"{r.n_features:>7}")
        return "\n".join(lines)


def report_meta(ds: Dataset, method: dict, split: SplitSpec, cfg: ForestConfig,
                full: SubsetEvaluation | None = None, base: str = "threshold_0") -> dict:
    meta = {
        "dataset": {"fingerprint": ds.fingerprint(), "rows": ds.rows, "features": ds.n_features},
        "method": method,
        "seed": cfg.seed,
        "config": {"forest": asdict(cfg), "split": asdict(split)},
        "rel_eff_base": base,
    }
    if full is not None:
        meta["full_set"] = {"accuracy": full.task_accuracy, "identifiability": full.identifiability,
                            "n_features": len(full.subset)}
    return meta


def threshold_sweep(
    ds: Dataset,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    split: SplitSpec = SplitSpec(),
    cfg: ForestConfig = ForestConfig(),
    solver: str = "exhaustive",
    scoring: str = "shap",
    keep: int = DEFAULT_KEEP,
    candidates: FeatureSubset | None = None,
    base: str = "max_over_subsets",
    permutations: int = 32,
    threads: int | None = None,
    progress=None,
    scores: ScoreTable | None = None,
) -> TradeoffReport:
    """Run the solver once and rank its evaluation log at every threshold.

    The baseline row is the threshold-0 solution and every row's relative
    effectiveness is measured against it.
    """
    if not thresholds:
        raise ValueError("thresholds must be non-empty")
    if any(not 0.0 <= t <= 1.0 for t in thresholds):
        raise ValueError("thresholds must lie in [0, 1]")
    thresholds = sorted(set(float(t) for t in thresholds))

    if solver == "hybrid":
        first = hybrid_minimize(ds, ThresholdPolicy(0.0, base), split, cfg, scoring, keep,
                                permutations=permutations, threads=threads, progress=progress, scores=scores)
        candidates = FeatureSubset(tuple(first.method["preselected"]))
    elif solver == "exhaustive":
        first = exhaustive_search(ds, candidates, ThresholdPolicy(0.0, base), split, cfg,
                                  threads=threads, progress=progress)
        candidates = candidates or FeatureSubset.full(ds.n_features)
    else:
        raise ValueError(f"unknown solver {solver!r}")

    ref = first.evaluation
    rows = []
    for t in thresholds:
        res = exhaustive_search(ds, candidates, ThresholdPolicy(t, base), split, cfg, evaluations=first.log)
        rows.append(TradeoffRow.of(res.evaluation, t, None if t == 0.0 else ref))
    full = _full_evaluation(ds, first.log, split, cfg)
    method = dict(first.method, threshold=list(thresholds))
    return TradeoffReport(TradeoffRow.of(ref, 0.0, None), tuple(rows),
                          report_meta(ds, method, split, cfg, full))


def _full_evaluation(ds: Dataset, log: Sequence[SubsetEvaluation], split: SplitSpec,
                     cfg: ForestConfig) -> SubsetEvaluation:
    full = FeatureSubset.full(ds.n_features)
    for e in log:
        if e.subset == full:
            return e
    return evaluate_subsets(ds, [full], split, cfg, threads=1)[0]


@dataclass(frozen=True)
class CurvePoint:
    n_features: int
    accuracy: float
    identifiability: float
    method: str


def curve_points(report: TradeoffReport, method: str | None = None) -> list[CurvePoint]:
    method = method or report.meta.get("method", {}).get("solver", "report")
    return [CurvePoint(r.n_features, r.accuracy, r.identifiability, method) for r in report.rows]


def curve_export(points: Sequence[CurvePoint] | TradeoffReport, path: str | Path,
                 full_accuracy: float | None = None, full_identifiability: float | None = None) -> Path:
    """Write (n_features, accuracy_loss, identifiability_reduction, method) rows.

    Losses are measured against the full-feature evaluation, taken from the
    report metadata when a report is given.
    """
    if isinstance(points, TradeoffReport):
        full = points.meta.get("full_set")
        if full is None and full_accuracy is None:
            raise ValueError("report carries no full-feature evaluation")
        if full_accuracy is None:
            full_accuracy, full_identifiability = full["accuracy"], full["identifiability"]
        points = curve_points(points)
    if not points:
        raise ValueError("nothing to export")
    if full_accuracy is None or full_identifiability is None:
        raise ValueError("full-feature accuracy and identifiability are required")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for p in points:
            w.writerow([p.n_features, repr(full_accuracy - p.accuracy),
                        repr(full_identifiability - p.identifiability), p.method])
    return path


def result_row(res: MinimizationResult, ref: SubsetEvaluation, threshold: float | None) -> TradeoffRow:
    return TradeoffRow.of(res.evaluation, threshold, ref)
