from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from datamin.forest import _kernels as K
from datamin.tabular import Dataset, FeatureSubset, SplitSpec, project, split_indices

FOREST_FORMAT = "datamin.forest"
FOREST_VERSION = 1
BACKGROUND_ROWS = 256

Target = Literal["task", "user"]


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    # None means ceil(sqrt(d)); an int is clipped to [1, d]
    features_per_split: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be positive or None")
        if self.min_samples_split < 1:
            raise ValueError("min_samples_split must be positive")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def mtry(self, d: int) -> int:
        if self.features_per_split is None:
            return max(1, math.ceil(math.sqrt(d)))
        return min(max(1, self.features_per_split), d)


@dataclass(eq=False)
class Forest:
    """Trained forest in flat-array form.

    Node ``i`` is a leaf when ``feature[i] == -1``. ``feature`` holds column
    positions within ``feature_names``; ``trained_on`` maps them back to the
    source dataset's indices.
    """

    roots: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    decrease: np.ndarray
    n_samples: np.ndarray
    class_labels: np.ndarray
    feature_names: tuple[str, ...]
    trained_on: FeatureSubset
    config: ForestConfig
    background: np.ndarray
    leaf_class: np.ndarray = field(init=False)

    def __post_init__(self):
        # first maximal count wins, i.e. ties go to the earlier class label
        self.leaf_class = np.argmax(self.counts, axis=1).astype(np.int64)

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    def _matrix(self, data: Dataset | np.ndarray) -> np.ndarray:
        if isinstance(data, np.ndarray):
            X = np.ascontiguousarray(data, dtype=np.float64)
            if X.ndim != 2 or X.shape[1] != len(self.feature_names):
                raise ValueError(f"expected {len(self.feature_names)} columns, got shape {X.shape}")
            return X
        if data.feature_names == self.feature_names:
            return data.X
        pos = {name: j for j, name in enumerate(data.feature_names)}
        missing = [n for n in self.feature_names if n not in pos]
        if missing:
            raise ValueError(f"column mismatch: dataset lacks {missing}")
        return np.ascontiguousarray(data.X[:, [pos[n] for n in self.feature_names]])

    def vote_counts(self, data: Dataset | np.ndarray) -> np.ndarray:
        X = self._matrix(data)
        return K.votes(X, self.roots, self.feature, self.threshold, self.left, self.right,
                       self.leaf_class, self.n_classes)

    def predict_proba(self, data: Dataset | np.ndarray) -> np.ndarray:
        """Per-class vote fractions."""
        return self.vote_counts(data) / self.n_trees

    def predict_codes(self, data: Dataset | np.ndarray) -> np.ndarray:
        return np.argmax(self.vote_counts(data), axis=1)

    def predict(self, data: Dataset | np.ndarray) -> np.ndarray:
        return self.class_labels[self.predict_codes(data)]

    def to_dict(self) -> dict:
        trees = []
        for t, root in enumerate(self.roots):
            trees.append(self._node_record(int(root)))
        return {
            "format": FOREST_FORMAT,
            "version": FOREST_VERSION,
            "config": asdict(self.config),
            "class_labels": self.class_labels.tolist(),
            "feature_names": list(self.feature_names),
            "trained_on": list(self.trained_on.indices),
            "background": self.background.tolist(),
            "trees": trees,
        }

    def _node_record(self, i: int) -> dict:
        rec = {"n_samples": int(self.n_samples[i]), "counts": self.counts[i].tolist()}
        if self.feature[i] >= 0:
            rec.update(
                feature=int(self.feature[i]),
                threshold=float(self.threshold[i]),
                decrease=float(self.decrease[i]),
                left=self._node_record(int(self.left[i])),
                right=self._node_record(int(self.right[i])),
            )
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "Forest":
        if doc.get("format") != FOREST_FORMAT or doc.get("version") != FOREST_VERSION:
            raise ValueError(f"not a {FOREST_FORMAT} v{FOREST_VERSION} document")
        n_classes = len(doc["class_labels"])
        feature, threshold, left, right, counts, decrease, n_samples, roots = ([] for _ in range(8))

        def walk(rec) -> int:
            i = len(feature)
            feature.append(rec.get("feature", -1))
            threshold.append(rec.get("threshold", 0.0))
            left.append(-1)
            right.append(-1)
            counts.append(rec["counts"])
            decrease.append(rec.get("decrease", 0.0))
            n_samples.append(rec["n_samples"])
            if "left" in rec:
                left[i] = walk(rec["left"])
                right[i] = walk(rec["right"])
            return i

        for tree in doc["trees"]:
            roots.append(walk(tree))
        names = tuple(doc["feature_names"])
        bg = np.asarray(doc["background"], dtype=np.float64).reshape(-1, len(names))
        return cls(
            roots=np.asarray(roots, dtype=np.int64),
            feature=np.asarray(feature, dtype=np.int32),
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.int32),
            right=np.asarray(right, dtype=np.int32),
            counts=np.asarray(counts, dtype=np.int64).reshape(-1, n_classes),
            decrease=np.asarray(decrease, dtype=np.float64),
            n_samples=np.asarray(n_samples, dtype=np.int64),
            class_labels=np.asarray(doc["class_labels"]),
            feature_names=names,
            trained_on=FeatureSubset(tuple(doc["trained_on"])),
            config=ForestConfig(**doc["config"]),
            background=bg,
        )

    @classmethod
    def from_json(cls, text: str) -> "Forest":
        return cls.from_dict(json.loads(text))


def _fit(X: np.ndarray, codes: np.ndarray, n_classes: int, cfg: ForestConfig):
    d = X.shape[1]
    mtry = cfg.mtry(d)
    max_depth = -1 if cfg.max_depth is None else cfg.max_depth
    parts = [
        K.build_tree(X, codes, n_classes, X.shape[0], mtry, max_depth, cfg.min_samples_split,
                     np.uint64(K.tree_seed(int(cfg.seed), t)))
        for t in range(cfg.n_trees)
    ]
    sizes = np.array([len(p[0]) for p in parts], dtype=np.int64)
    roots = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    feature, threshold, left, right, counts, decrease, n_samples = (
        np.concatenate([p[k] for p in parts]) for k in range(7)
    )
    for off, size in zip(roots, sizes):
        sl = slice(off, off + size)
        inner = left[sl] >= 0
        left[sl][inner] += off
        right[sl][inner] += off
    return roots, feature, threshold, left, right, counts, decrease, n_samples


def _background(X: np.ndarray, seed: int) -> np.ndarray:
    if X.shape[0] <= BACKGROUND_ROWS:
        return X.copy()
    rng = np.random.default_rng(K.tree_seed(seed, -2))
    pick = np.sort(rng.choice(X.shape[0], size=BACKGROUND_ROWS, replace=False))
    return X[pick]


def train(ds: Dataset, target: Target, subset: FeatureSubset | None, cfg: ForestConfig) -> Forest:
    """Fit a forest predicting ``target`` from the columns in ``subset``.

    ``subset=None`` uses every feature. Bootstrap and split sampling depend
    only on ``cfg.seed`` and the tree index.
    """
    if subset is None:
        subset = FeatureSubset.full(ds.n_features)
    view = project(ds, subset)
    class_labels, codes = np.unique(view.labels(target), return_inverse=True)
    X = view.X
    arrays = _fit(X, codes.astype(np.int64), len(class_labels), cfg)
    return Forest(*arrays, class_labels=class_labels, feature_names=view.feature_names,
                  trained_on=subset, config=cfg, background=_background(X, int(cfg.seed)))


def accuracy(f: Forest, test: Dataset, target: Target = "task") -> float:
    """Fraction of rows whose majority-vote prediction equals the ``target`` label."""
    pred = f.predict(test)
    return float(np.mean(pred == test.labels(target)))


def gini_importance(f: Forest) -> np.ndarray:
    """Mean decrease in Gini impurity per feature, normalised to sum to one.

    Each tree's node decreases are weighted by the node's share of the tree's
    bootstrap sample. A forest with no splits gets uniform weights.
    """
    d = len(f.feature_names)
    imp = np.zeros(d)
    for t, root in enumerate(f.roots):
        end = f.roots[t + 1] if t + 1 < f.n_trees else len(f.feature)
        nodes = np.arange(root, end)
        inner = nodes[f.feature[nodes] >= 0]
        if inner.size:
            np.add.at(imp, f.feature[inner], f.decrease[inner] / f.n_samples[root])
    imp /= f.n_trees
    total = imp.sum()
    if total <= 0:
        return np.full(d, 1.0 / d)
    return imp / total


class PairEvaluator:
    """Task accuracy and identifiability for many subsets of one dataset.

    The holdout split and label encodings are computed once; each subset then
    costs two forest fits on the projected training rows. Both forests share
    a single ForestConfig.
    """

    def __init__(self, ds: Dataset, split: SplitSpec, cfg: ForestConfig):
        self.ds = ds
        self.split = split
        self.cfg = cfg
        self.train_idx, self.test_idx = split_indices(ds, split)
        self._codes = {}
        for target in ("task", "user"):
            labels = ds.labels(target)
            classes, codes = np.unique(labels[self.train_idx], return_inverse=True)
            # test labels unseen in training can never be predicted correctly
            pos = np.searchsorted(classes, labels[self.test_idx])
            pos = np.clip(pos, 0, len(classes) - 1)
            seen = classes[pos] == labels[self.test_idx]
            test_codes = np.where(seen, pos, -1)
            self._codes[target] = (classes, codes.astype(np.int64), test_codes)

    def _score(self, Xtr: np.ndarray, Xte: np.ndarray, target: str) -> float:
        classes, codes, test_codes = self._codes[target]
        roots, feature, threshold, left, right, counts, _, _ = _fit(Xtr, codes, len(classes), self.cfg)
        leaf_class = np.argmax(counts, axis=1).astype(np.int64)
        v = K.votes(Xte, roots, feature, threshold, left, right, leaf_class, len(classes))
        return float(np.mean(np.argmax(v, axis=1) == test_codes))

    def __call__(self, subset: FeatureSubset) -> tuple[float, float]:
        subset.validate(self.ds.n_features)
        cols = list(subset.indices)
        Xtr = np.ascontiguousarray(self.ds.X[np.ix_(self.train_idx, cols)])
        Xte = np.ascontiguousarray(self.ds.X[np.ix_(self.test_idx, cols)])
        return self._score(Xtr, Xte, "task"), self._score(Xtr, Xte, "user")


def train_pair(ds: Dataset, subset: FeatureSubset | None, split: SplitSpec, cfg: ForestConfig):
    """Provider and adversary forests on the training partition, one config for both.

    Returns (task_forest, user_forest, train, test).
    """
    train_idx, test_idx = split_indices(ds, split)
    tr, te = ds.take_rows(train_idx), ds.take_rows(test_idx)
    return train(tr, "task", subset, cfg), train(tr, "user", subset, cfg), tr, te


def evaluate_pair(ds: Dataset, subset: FeatureSubset, split: SplitSpec, cfg: ForestConfig) -> tuple[float, float]:
    """(task accuracy, identifiability) of forests trained on ``subset``.

    Deliberately the plain route (split, train, predict, compare labels);
    PairEvaluator computes the same numbers through shared precomputation.
    """
    if subset is None:
        raise ValueError("evaluate_pair needs a non-empty subset")
    task_f, user_f, _, test = train_pair(ds, subset, split, cfg)
    return accuracy(task_f, test, "task"), accuracy(user_f, test, "user")
