"""Per-feature utility and identifiability scores.

Five scoring methods produce a :class:`ScoreTable`:

* ``entropy_privacy``: marginal entropy of each binned feature (identifiability only)
* ``mi_utility``: mutual information with the task labels (utility only)
* ``tradeoff``: normalised utility minus normalised privacy score, stored as utility
* ``shap``: mean over rows of the max over classes of |Shapley value|, for both models
* ``gini``: Gini importance of the provider and adversary forests
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from datamin.forest import Forest, ForestConfig, gini_importance, train_pair
from datamin.forest import _kernels as K
from datamin.tabular import Dataset, FeatureSubset, SplitSpec, project, split

Method = Literal["entropy_privacy", "mi_utility", "tradeoff", "shap", "gini"]
METHODS = ("entropy_privacy", "mi_utility", "tradeoff", "shap", "gini")


@dataclass(frozen=True)
class BinningSpec:
    bins: int = 16
    strategy: Literal["quantile"] = "quantile"

    def __post_init__(self):
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if self.strategy != "quantile":
            raise ValueError(f"unsupported binning strategy {self.strategy!r}")


@dataclass(frozen=True, eq=False)
class ScoreTable:
    method: str
    features: tuple[int, ...]
    names: tuple[str, ...]
    utility: np.ndarray | None = None
    identifiability: np.ndarray | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown scoring method {self.method!r}")
        d = len(self.features)
        if len(self.names) != d:
            raise ValueError("names and features differ in length")
        for label in ("utility", "identifiability"):
            v = getattr(self, label)
            if v is None:
                continue
            v = np.asarray(v, dtype=np.float64)
            if v.shape != (d,):
                raise ValueError(f"{label} must have length {d}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{label} contains non-finite entries")
            object.__setattr__(self, label, v)
        if self.utility is None and self.identifiability is None:
            raise ValueError("a score table needs at least one score vector")

    def __eq__(self, other):
        if not isinstance(other, ScoreTable):
            return NotImplemented
        same = lambda a, b: (a is None and b is None) or (
            a is not None and b is not None and np.array_equal(a, b))
        return (self.method, self.features, self.names) == (other.method, other.features, other.names) and \
            same(self.utility, other.utility) and same(self.identifiability, other.identifiability)

    def to_dict(self) -> dict:
        opt = lambda v: None if v is None else v.tolist()
        return {"method": self.method, "features": list(self.features), "names": list(self.names),
                "utility": opt(self.utility), "identifiability": opt(self.identifiability)}

    @classmethod
    def from_dict(cls, doc: dict) -> "ScoreTable":
        return cls(doc["method"], tuple(doc["features"]), tuple(doc["names"]),
                   doc.get("utility"), doc.get("identifiability"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["feature", "name", "v", "c"])
        for k, (idx, name) in enumerate(zip(self.features, self.names)):
            v = "" if self.utility is None else repr(float(self.utility[k]))
            c = "" if self.identifiability is None else repr(float(self.identifiability[k]))
            w.writerow([idx, name, v, c])
        return out.getvalue()

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() if path.suffix == ".json" else self.to_csv())
        return path


def bin_values(values: np.ndarray, b: BinningSpec = BinningSpec()) -> np.ndarray:
    """Quantile bin codes; repeated quantile edges collapse into one bin."""
    values = np.asarray(values, dtype=np.float64)
    edges = np.quantile(values, np.linspace(0.0, 1.0, b.bins + 1))
    inner = np.unique(edges[1:-1])
    return np.searchsorted(inner, values, side="right")


def _entropy_of_counts(counts: np.ndarray) -> float:
    counts = counts[counts > 0]
    p = counts / counts.sum()
    return float(max(0.0, -(p * np.log2(p)).sum()))


def _codes(labels) -> np.ndarray:
    return np.unique(np.asarray(labels), return_inverse=True)[1]


def marginal_entropy(col, b: BinningSpec = BinningSpec()) -> float:
    """Shannon entropy in bits of the binned column."""
    values = getattr(col, "values", col)
    if len(values) == 0:
        raise ValueError("empty column")
    return _entropy_of_counts(np.bincount(bin_values(values, b)))


def mutual_information(col, labels, b: BinningSpec = BinningSpec()) -> float:
    """I(X;Y) = H(Y) - H(Y|X) in bits, with X quantile-binned."""
    values = getattr(col, "values", col)
    labels = np.asarray(labels)
    if len(values) != len(labels):
        raise ValueError("column and labels differ in length")
    x = bin_values(values, b)
    y = _codes(labels)
    joint = np.zeros((x.max() + 1, y.max() + 1))
    np.add.at(joint, (x, y), 1)
    n = joint.sum()
    h_y = _entropy_of_counts(joint.sum(axis=0))
    h_y_given_x = sum(row.sum() / n * _entropy_of_counts(row) for row in joint if row.sum() > 0)
    return max(0.0, h_y - h_y_given_x)


def _minmax(v: np.ndarray) -> np.ndarray:
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full(v.shape, 0.5)
    return (v - lo) / (hi - lo)


def tradeoff_score(util, priv) -> np.ndarray:
    util = np.asarray(util, dtype=np.float64)
    priv = np.asarray(priv, dtype=np.float64)
    if util.shape != priv.shape:
        raise ValueError(f"length mismatch: {util.shape} vs {priv.shape}")
    if not (np.all(np.isfinite(util)) and np.all(np.isfinite(priv))):
        raise ValueError("scores must be finite")
    return _minmax(util) - _minmax(priv)


@dataclass(frozen=True)
class ShapAttribution:
    values: np.ndarray  # (rows, classes, features)
    baseline: np.ndarray  # (classes,)
    class_labels: np.ndarray


def _cycled_draws(rng: np.random.Generator, n_background: int, m: int) -> np.ndarray:
    passes = -(-m // n_background)
    return np.concatenate([rng.permutation(n_background) for _ in range(passes)])[:m]


def shapley(f: Forest, data, permutations: int = 100, seed: int = 0,
            background: np.ndarray | None = None) -> ShapAttribution:
    """Monte Carlo permutation Shapley values of the forest's vote fractions.

    Permutations come in antithetic pairs (a random order and its reverse,
    sharing one background row), which cancels much of the sampling noise.
    Absent features take their value from a background row (the forest's
    stored training sample unless ``background`` is given); rows are drawn by
    cycling through shuffled passes of the sample.
    """
    if permutations < 1:
        raise ValueError("permutations must be >= 1")
    X = f._matrix(data)
    bg = f.background if background is None else np.ascontiguousarray(background, dtype=np.float64)
    n, d = X.shape
    rng = np.random.default_rng(seed)
    half = -(-permutations // 2)
    base = rng.permuted(np.tile(np.arange(d), (n * half, 1)), axis=1).reshape(n, half, d)
    perms = np.stack([base, base[:, :, ::-1]], axis=2).reshape(n, 2 * half, d)[:, :permutations]
    draws = np.stack([_cycled_draws(rng, len(bg), half) for _ in range(n)]) if n else \
        np.zeros((0, half), dtype=np.int64)
    draws = np.repeat(draws, 2, axis=1)[:, :permutations]
    phi = K.shapley_walk(X, bg, np.ascontiguousarray(perms, dtype=np.int64),
                         np.ascontiguousarray(draws, dtype=np.int64), f.roots, f.feature,
                         f.threshold, f.left, f.right, f.leaf_class, f.n_classes)
    baseline = f.predict_proba(bg).mean(axis=0)
    return ShapAttribution(phi, baseline, f.class_labels)


def exact_shapley(f: Forest, data, background: np.ndarray | None = None) -> ShapAttribution:
    """Shapley values by enumerating every coalition; exponential in d."""
    X = f._matrix(data)
    bg = f.background if background is None else np.asarray(background, dtype=np.float64)
    n, d = X.shape
    if d > 12:
        raise ValueError(f"exact enumeration over {d} features is too expensive")
    phi = np.zeros((n, f.n_classes, d))
    for i in range(n):
        value = {}
        for size in range(d + 1):
            for coal in itertools.combinations(range(d), size):
                Z = bg.copy()
                Z[:, list(coal)] = X[i, list(coal)]
                value[coal] = f.predict_proba(Z).mean(axis=0)
        for j in range(d):
            others = [k for k in range(d) if k != j]
            for size in range(d):
                w = math.factorial(size) * math.factorial(d - size - 1) / math.factorial(d)
                for coal in itertools.combinations(others, size):
                    with_j = tuple(sorted(coal + (j,)))
                    phi[i, :, j] += w * (value[with_j] - value[coal])
    return ShapAttribution(phi, f.predict_proba(bg).mean(axis=0), f.class_labels)


def _table(method: str, ds: Dataset, subset: FeatureSubset, v=None, c=None) -> ScoreTable:
    return ScoreTable(method, subset.indices, tuple(subset.names(ds)), v, c)


def _aggregate_shap(attr: ShapAttribution) -> np.ndarray:
    return np.abs(attr.values).max(axis=1).mean(axis=0)


def shap_scores(ds: Dataset, subset: FeatureSubset | None, split_spec: SplitSpec, cfg: ForestConfig,
                permutations: int = 32, seed: int = 0, max_rows: int | None = None) -> ScoreTable:
    """v_f and c_f as the row mean of the class max of |Shapley value|.

    Rows explained are the holdout partition (first ``max_rows`` of it when
    given).
    """
    subset = subset or FeatureSubset.full(ds.n_features)
    task_f, user_f, _, test = train_pair(ds, subset, split_spec, cfg)
    rows = test if max_rows is None else test.take_rows(np.arange(min(max_rows, test.rows)))
    v = _aggregate_shap(shapley(task_f, rows, permutations, seed))
    c = _aggregate_shap(shapley(user_f, rows, permutations, seed + 1))
    return _table("shap", ds, subset, v, c)


def gini_scores(ds: Dataset, subset: FeatureSubset | None, split_spec: SplitSpec, cfg: ForestConfig) -> ScoreTable:
    subset = subset or FeatureSubset.full(ds.n_features)
    task_f, user_f, _, _ = train_pair(ds, subset, split_spec, cfg)
    return _table("gini", ds, subset, gini_importance(task_f), gini_importance(user_f))


def _train_rows(ds: Dataset, subset: FeatureSubset, split_spec: SplitSpec | None) -> Dataset:
    view = project(ds, subset)
    return view if split_spec is None else split(view, split_spec)[0]


def entropy_scores(ds: Dataset, subset: FeatureSubset | None = None, split_spec: SplitSpec | None = None,
                   b: BinningSpec = BinningSpec()) -> ScoreTable:
    subset = subset or FeatureSubset.full(ds.n_features)
    tr = _train_rows(ds, subset, split_spec)
    c = np.array([marginal_entropy(col, b) for col in tr.features])
    return _table("entropy_privacy", ds, subset, c=c)


def mi_scores(ds: Dataset, subset: FeatureSubset | None = None, split_spec: SplitSpec | None = None,
              b: BinningSpec = BinningSpec()) -> ScoreTable:
    subset = subset or FeatureSubset.full(ds.n_features)
    tr = _train_rows(ds, subset, split_spec)
    v = np.array([mutual_information(col, tr.task_labels, b) for col in tr.features])
    return _table("mi_utility", ds, subset, v=v)


def tradeoff_scores(ds: Dataset, subset: FeatureSubset | None = None, split_spec: SplitSpec | None = None,
                    b: BinningSpec = BinningSpec()) -> ScoreTable:
    subset = subset or FeatureSubset.full(ds.n_features)
    v = mi_scores(ds, subset, split_spec, b).utility
    c = entropy_scores(ds, subset, split_spec, b).identifiability
    return _table("tradeoff", ds, subset, v=tradeoff_score(v, c))


def score_features(method: str, ds: Dataset, subset: FeatureSubset | None, split_spec: SplitSpec,
                   cfg: ForestConfig, permutations: int = 32, seed: int = 0,
                   b: BinningSpec = BinningSpec()) -> ScoreTable:
    if method == "shap":
        return shap_scores(ds, subset, split_spec, cfg, permutations, seed)
    if method == "gini":
        return gini_scores(ds, subset, split_spec, cfg)
    if method == "entropy_privacy":
        return entropy_scores(ds, subset, split_spec, b)
    if method == "mi_utility":
        return mi_scores(ds, subset, split_spec, b)
    if method == "tradeoff":
        return tradeoff_scores(ds, subset, split_spec, b)
    raise ValueError(f"unknown scoring method {method!r}; expected one of {METHODS}")
