"""Provider strategies: exhaustive subset search, greedy knapsack heuristics, the hybrid."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Literal, Sequence

import numpy as np

from datamin.attribution import ScoreTable, score_features
from datamin.forest import ForestConfig, PairEvaluator
from datamin.tabular import Dataset, FeatureSubset, SplitSpec, from_arrays

log = logging.getLogger(__name__)

EXHAUSTIVE_CAP = 20
EXHAUSTIVE_WARN = 15
DEFAULT_KEEP = 12
# accuracies are ratios of small integers; this only absorbs rounding in (1 - l) * base
FEASIBILITY_EPS = 1e-12
UTILITY_EPS = 1e-9

Progress = Callable[[int, int], None]


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class ThresholdPolicy:
    l: float
    base: Literal["max_over_subsets", "full_feature_set"] = "max_over_subsets"

    def __post_init__(self):
        if not 0.0 <= self.l <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.l}")
        if self.base not in ("max_over_subsets", "full_feature_set"):
            raise ValueError(f"unknown threshold base {self.base!r}")


@dataclass(frozen=True)
class SubsetEvaluation:
    subset: FeatureSubset
    task_accuracy: float
    identifiability: float

    @property
    def reward(self) -> float:
        return -self.identifiability


@dataclass(frozen=True)
class GreedyStrategy:
    order_by: Literal["utility_desc", "identifiability_asc", "ctv_asc"]
    stop: Literal["utility_sum", "top_k"]
    V: float | None = None
    k: int | None = None

    def __post_init__(self):
        if self.order_by not in ("utility_desc", "identifiability_asc", "ctv_asc"):
            raise ValueError(f"unknown order {self.order_by!r}")
        if self.stop == "utility_sum":
            if self.V is None or not self.V > 0:
                raise ValueError("utility_sum stop needs V > 0")
        elif self.stop == "top_k":
            if self.k is None or self.k < 1:
                raise ValueError("top_k stop needs k >= 1")
        else:
            raise ValueError(f"unknown stop rule {self.stop!r}")


@dataclass
class MinimizationResult:
    chosen: FeatureSubset
    evaluation: SubsetEvaluation
    baseline: SubsetEvaluation
    candidates_evaluated: int
    method: dict
    log: list[SubsetEvaluation] = field(default_factory=list, repr=False)


def ranking_key(e: SubsetEvaluation):
    return (e.identifiability, len(e.subset), -e.task_accuracy, e.subset.indices)


def evaluate_subsets(
    ds: Dataset,
    subsets: Sequence[FeatureSubset],
    split: SplitSpec,
    cfg: ForestConfig,
    threads: int | None = None,
    progress: Progress | None = None,
) -> list[SubsetEvaluation]:
    """Evaluate every subset, in input order.

    Each evaluation is a pure function of (dataset, subset, split, config), so
    the result does not depend on ``threads`` or scheduling.
    """
    evaluator = PairEvaluator(ds, split, cfg)
    total = len(subsets)

    def one(s: FeatureSubset) -> SubsetEvaluation:
        acc, ident = evaluator(s)
        return SubsetEvaluation(s, acc, ident)

    out = []
    if threads == 1 or total < 2:
        for i, s in enumerate(subsets, 1):
            out.append(one(s))
            if progress:
                progress(i, total)
        return out
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for i, e in enumerate(pool.map(one, subsets), 1):
            out.append(e)
            if progress:
                progress(i, total)
    return out


def enumerate_subsets(candidates: FeatureSubset) -> list[FeatureSubset]:
    """All non-empty subsets of ``candidates``, ordered by bitmask over candidate positions."""
    idx = candidates.indices
    k = len(idx)
    return [FeatureSubset(tuple(idx[j] for j in range(k) if m >> j & 1)) for m in range(1, 1 << k)]


def base_evaluation(evaluations: Sequence[SubsetEvaluation], policy: ThresholdPolicy,
                    full: FeatureSubset) -> SubsetEvaluation:
    if policy.base == "full_feature_set":
        for e in evaluations:
            if e.subset == full:
                return e
        raise ValueError("full candidate set missing from the evaluation log")
    # highest accuracy; among equals the same ordering as the final ranking
    return min(evaluations, key=lambda e: (-e.task_accuracy,) + ranking_key(e))


def select(evaluations: Sequence[SubsetEvaluation], policy: ThresholdPolicy,
           full: FeatureSubset) -> tuple[SubsetEvaluation, SubsetEvaluation]:
    """Pick the least identifiable feasible subset; returns (chosen, base)."""
    base = base_evaluation(evaluations, policy, full)
    floor = (1.0 - policy.l) * base.task_accuracy - FEASIBILITY_EPS
    feasible = [e for e in evaluations if e.task_accuracy >= floor]
    return min(feasible, key=ranking_key), base


def exhaustive_search(
    ds: Dataset,
    candidate_features: FeatureSubset | None,
    policy: ThresholdPolicy,
    split: SplitSpec,
    cfg: ForestConfig,
    cap: int = EXHAUSTIVE_CAP,
    threads: int | None = None,
    progress: Progress | None = None,
    evaluations: Sequence[SubsetEvaluation] | None = None,
) -> MinimizationResult:
    """Evaluate all 2^k - 1 candidate subsets and rank them against the threshold.

    A previously computed ``evaluations`` log over the same candidates may be
    passed to skip retraining.
    """
    if candidate_features is None:
        candidate_features = FeatureSubset.full(ds.n_features)
    candidate_features.validate(ds.n_features)
    k = len(candidate_features)
    if k > cap:
        raise ValueError(f"exhaustive search over {k} features exceeds the cap of {cap}")
    if k > EXHAUSTIVE_WARN:
        warnings.warn(f"exhaustive search over {k} features trains {2 * ((1 << k) - 1)} forests",
                      stacklevel=2)
    if evaluations is None:
        evaluations = evaluate_subsets(ds, enumerate_subsets(candidate_features), split, cfg,
                                       threads=threads, progress=progress)
    chosen, base = select(evaluations, policy, candidate_features)
    return MinimizationResult(
        chosen=chosen.subset,
        evaluation=chosen,
        baseline=base,
        candidates_evaluated=len(evaluations),
        method={"solver": "exhaustive", "threshold": policy.l, "base": policy.base,
                "candidates": list(candidate_features.indices)},
        log=list(evaluations),
    )


def _order(scores: ScoreTable, order_by: str) -> list[int]:
    """Positions into the score table in greedy order (stable on ties)."""
    v, c = scores.utility, scores.identifiability
    d = len(scores.features)
    if order_by == "utility_desc":
        if v is None:
            raise ValueError(f"{scores.method} scores carry no utility vector")
        return sorted(range(d), key=lambda i: -v[i])
    if order_by == "identifiability_asc":
        if c is None:
            raise ValueError(f"{scores.method} scores carry no identifiability vector")
        return sorted(range(d), key=lambda i: c[i])
    if v is None or c is None:
        raise ValueError("cost-to-value ordering needs both score vectors")
    ratio = [c[i] / v[i] if v[i] > 0 else math.inf for i in range(d)]
    return sorted(range(d), key=lambda i: ratio[i])


def greedy_select(scores: ScoreTable, strategy: GreedyStrategy) -> FeatureSubset:
    order = _order(scores, strategy.order_by)
    if strategy.stop == "top_k":
        if strategy.k > len(order):
            raise ValueError(f"k={strategy.k} exceeds the {len(order)} scored features")
        picked = order[: strategy.k]
    else:
        if scores.utility is None:
            raise ValueError("utility_sum stop needs a utility vector")
        target = strategy.V - UTILITY_EPS * max(1.0, abs(strategy.V))
        if scores.utility.sum() < target:
            raise InfeasibleError(f"total utility {scores.utility.sum():.6g} < V={strategy.V}")
        picked, total = [], 0.0
        for i in order:
            picked.append(i)
            total += scores.utility[i]
            if total >= target:
                break
    return FeatureSubset.of(scores.features[i] for i in picked)


def knapsack_oracle(scores: ScoreTable, V: float) -> FeatureSubset:
    """Exact min sum(c) subject to sum(v) >= V by enumerating all subsets."""
    v, c = scores.utility, scores.identifiability
    if v is None or c is None:
        raise ValueError("knapsack needs utility and identifiability vectors")
    d = len(v)
    if d > 20:
        raise ValueError(f"knapsack enumeration over {d} items is capped at 20")
    n = 1 << d
    sum_v = np.zeros(n)
    sum_c = np.zeros(n)
    size = np.zeros(n, dtype=np.int64)
    for j in range(d):
        lo = 1 << j
        sum_v[lo:2 * lo] = sum_v[:lo] + v[j]
        sum_c[lo:2 * lo] = sum_c[:lo] + c[j]
        size[lo:2 * lo] = size[:lo] + 1
    target = V - UTILITY_EPS * max(1.0, abs(V))
    ok = np.flatnonzero(sum_v >= target)
    ok = ok[ok > 0]
    if ok.size == 0:
        raise InfeasibleError(f"total utility {v.sum():.6g} < V={V}")
    best = sum_c[ok].min()
    tied = ok[sum_c[ok] == best]
    tied = tied[size[tied] == size[tied].min()]
    as_idx = lambda m: tuple(j for j in range(d) if m >> j & 1)
    winner = min((as_idx(int(m)) for m in tied))
    return FeatureSubset(tuple(scores.features[j] for j in winner))


# order used for the preselection stage of each scoring method
PRESELECT_ORDER = {
    "shap": "ctv_asc",
    "gini": "ctv_asc",
    "mi_utility": "utility_desc",
    "entropy_privacy": "identifiability_asc",
    "tradeoff": "utility_desc",
}


def hybrid_minimize(
    ds: Dataset,
    policy: ThresholdPolicy,
    split: SplitSpec,
    cfg: ForestConfig,
    scoring: str = "shap",
    keep: int = DEFAULT_KEEP,
    order_by: str | None = None,
    permutations: int = 32,
    shap_seed: int = 0,
    threads: int | None = None,
    progress: Progress | None = None,
    scores: ScoreTable | None = None,
) -> MinimizationResult:
    """Greedy top-``keep`` preselection followed by exhaustive search over the kept features."""
    if not 1 <= keep <= min(ds.n_features, EXHAUSTIVE_CAP):
        raise ValueError(f"keep must lie in [1, {min(ds.n_features, EXHAUSTIVE_CAP)}], got {keep}")
    if scores is None:
        scores = score_features(scoring, ds, None, split, cfg, permutations=permutations, seed=shap_seed)
    order_by = order_by or PRESELECT_ORDER[scores.method]
    kept = greedy_select(scores, GreedyStrategy(order_by, "top_k", k=keep))
    res = exhaustive_search(ds, kept, policy, split, cfg, threads=threads, progress=progress)
    res.method = {
        "solver": "hybrid",
        "threshold": policy.l,
        "base": policy.base,
        "scoring": scores.method,
        "order_by": order_by,
        "keep": keep,
        "preselected": list(kept.indices),
        "scores": scores.to_dict(),
    }
    return res


def feature_minimize(features, utility_labels=None, user_labels=None, threshold: float = 0.01,
                     split: SplitSpec | None = None, cfg: ForestConfig | None = None,
                     threads: int | None = None) -> FeatureSubset:
    """Choose the features to keep.

    ``features`` is a Dataset (its own labels are used unless overridden) or a
    2-D array accompanied by both label vectors. Up to the exhaustive cap the
    search is exhaustive; beyond it the hybrid solver keeps 12 SHAP-ranked
    features.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    if isinstance(features, Dataset):
        ds = features
        if utility_labels is not None or user_labels is not None:
            ds = Dataset(ds.X, ds.feature_names,
                         ds.task_labels if utility_labels is None else np.asarray(utility_labels),
                         ds.user_labels if user_labels is None else np.asarray(user_labels))
    else:
        if utility_labels is None or user_labels is None:
            raise ValueError("array features need both utility_labels and user_labels")
        ds = from_arrays(features, utility_labels, user_labels)
    split = split or SplitSpec()
    cfg = cfg or ForestConfig()
    policy = ThresholdPolicy(threshold)
    if ds.n_features <= EXHAUSTIVE_CAP:
        return exhaustive_search(ds, None, policy, split, cfg, threads=threads).chosen
    return hybrid_minimize(ds, policy, split, cfg, "shap", DEFAULT_KEEP, threads=threads).chosen


def write_log(evaluations: Iterable[SubsetEvaluation], ds: Dataset, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subset", "names", "n_features", "task_accuracy", "identifiability"])
        for e in evaluations:
            w.writerow([" ".join(map(str, e.subset.indices)), " ".join(e.subset.names(ds)),
                        len(e.subset), repr(e.task_accuracy), repr(e.identifiability)])
    return path
