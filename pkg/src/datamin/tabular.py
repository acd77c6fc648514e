"""Dataset model with dual labelings, subset projection, splitting and CSV I/O."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
import pandas as pd

MISSING_TOKENS = ("", "NaN")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    if a.flags.writeable:
        a = a.copy()
        a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FeatureColumn:
    name: str
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    """Numeric feature matrix plus a task labeling and a user labeling.

    Arrays are made read-only on construction so a dataset can be shared
    between worker threads without copying.
    """

    X: np.ndarray
    feature_names: tuple[str, ...]
    task_labels: np.ndarray
    user_labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {X.shape}")
        n, d = X.shape
        if n < 1 or d < 1:
            raise ValueError(f"dataset needs at least one row and one feature, got {n}x{d}")
        names = tuple(str(s) for s in self.feature_names)
        if len(names) != d:
            raise ValueError(f"{len(names)} feature names for {d} columns")
        if len(set(names)) != d:
            raise ValueError("feature names must be unique")
        task = np.asarray(self.task_labels)
        user = np.asarray(self.user_labels)
        for label, arr in (("task", task), ("user", user)):
            if arr.ndim != 1 or arr.shape[0] != n:
                raise ValueError(f"{label} labels must have exactly {n} entries")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "task_labels", _frozen(task))
        object.__setattr__(self, "user_labels", _frozen(user))

    @property
    def rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def features(self) -> list[FeatureColumn]:
        return [FeatureColumn(name, self.X[:, j]) for j, name in enumerate(self.feature_names)]

    def labels(self, target: str) -> np.ndarray:
        if target == "task":
            return self.task_labels
        if target == "user":
            return self.user_labels
        raise ValueError(f"unknown target {target!r}; expected 'task' or 'user'")

    def take_rows(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.X[idx], self.feature_names, self.task_labels[idx], self.user_labels[idx])

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update("\x1f".join(self.feature_names).encode())
        for arr in (self.task_labels, self.user_labels):
            h.update("\x1f".join(map(str, arr.tolist())).encode())
        return h.hexdigest()[:16]

    def has_missing(self) -> bool:
        return bool(np.isnan(self.X).any())


@dataclass(frozen=True, order=True)
class FeatureSubset:
    """Strictly increasing, non-empty tuple of feature indices."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("feature subset must be non-empty")
        if any(i < 0 for i in idx):
            raise ValueError(f"negative feature index in {idx}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"feature indices must be strictly increasing, got {idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, indices: Iterable[int]) -> "FeatureSubset":
        return cls(tuple(sorted(set(int(i) for i in indices))))

    @classmethod
    def full(cls, d: int) -> "FeatureSubset":
        return cls(tuple(range(d)))

    @classmethod
    def from_mask(cls, mask: int) -> "FeatureSubset":
        return cls(tuple(i for i in range(mask.bit_length()) if mask >> i & 1))

    @property
    def mask(self) -> int:
        m = 0
        for i in self.indices:
            m |= 1 << i
        return m

    def validate(self, d: int) -> None:
        if self.indices[-1] >= d:
            raise IndexError(f"feature index {self.indices[-1]} out of range for {d} features")

    def names(self, ds: Dataset) -> list[str]:
        return [ds.feature_names[i] for i in self.indices]

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.3
    seed: int = 0
    stratify_on: Literal["task", "user", "joint"] = "task"

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.stratify_on not in ("task", "user", "joint"):
            raise ValueError(f"unknown stratify_on {self.stratify_on!r}")


def project(ds: Dataset, s: FeatureSubset) -> Dataset:
    s.validate(ds.n_features)
    if s.indices == tuple(range(ds.n_features)):
        return ds
    cols = list(s.indices)
    return Dataset(ds.X[:, cols], tuple(ds.feature_names[i] for i in cols), ds.task_labels, ds.user_labels)


def _strata(ds: Dataset, on: str) -> np.ndarray:
    if on == "joint":
        _, t = np.unique(ds.task_labels, return_inverse=True)
        _, u = np.unique(ds.user_labels, return_inverse=True)
        return t.astype(np.int64) * (int(u.max()) + 1) + u
    _, codes = np.unique(ds.labels(on), return_inverse=True)
    return codes


def split_indices(ds: Dataset, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Stratified holdout row indices, each sorted ascending."""
    if ds.rows < 2:
        raise ValueError(f"cannot split a dataset with {ds.rows} row(s)")
    strata = _strata(ds, spec.stratify_on)
    rng = np.random.default_rng(int(spec.seed))
    test_parts = []
    for s in np.unique(strata):
        members = np.flatnonzero(strata == s)
        n_test = math.floor(spec.test_fraction * len(members) + 0.5)
        test_parts.append(rng.permutation(members)[:n_test])
    test = np.sort(np.concatenate(test_parts))
    if test.size == 0 or test.size == ds.rows:
        raise ValueError(
            f"split with test_fraction={spec.test_fraction} stratified on {spec.stratify_on!r} "
            "leaves one partition empty"
        )
    is_test = np.zeros(ds.rows, dtype=bool)
    is_test[test] = True
    return np.flatnonzero(~is_test), test


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(ds, spec)
    return ds.take_rows(train_idx), ds.take_rows(test_idx)


def _coerce_labels(col: pd.Series) -> np.ndarray:
    as_num = pd.to_numeric(col, errors="coerce")
    if as_num.notna().all() and np.all(np.mod(as_num.to_numpy(), 1) == 0):
        return as_num.to_numpy().astype(np.int64)
    return col.to_numpy(dtype=object).astype(str)


def _parse_column(col: pd.Series, name: str) -> np.ndarray:
    # numpy's str -> float is correctly rounded, so repr-written floats round-trip exactly
    present = col.notna().to_numpy()
    out = np.full(len(col), np.nan)
    cells = col.to_numpy(dtype=object)
    try:
        out[present] = np.asarray(cells[present], dtype=np.float64)
    except ValueError:
        for row in np.flatnonzero(present):
            try:
                float(cells[row])
            except ValueError:
                raise ValueError(f"unparseable value {cells[row]!r} in column {name!r}, "
                                 f"data row {row + 1}") from None
        raise
    return out


def load_csv(
    path: str | Path,
    task_column: str,
    user_column: str,
    na_policy: Literal["drop_rows", "error"] = "drop_rows",
) -> Dataset:
    """Read a header-first CSV; every column but the two label columns is a feature.

    Empty cells and the literal ``NaN`` mark missing values. Label columns that
    are all integers are returned as int64, otherwise as strings.
    """
    if na_policy not in ("drop_rows", "error"):
        raise ValueError(f"unknown na_policy {na_policy!r}")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=list(MISSING_TOKENS))
    for col in (task_column, user_column):
        if col not in raw.columns:
            raise KeyError(f"missing column {col!r} in {path}")
    feature_cols = [c for c in raw.columns if c not in (task_column, user_column)]
    if not feature_cols:
        raise ValueError(f"{path} has no feature columns")

    values = {}
    for c in feature_cols:
        values[c] = _parse_column(raw[c], c)
    X = np.column_stack([values[c] for c in feature_cols])
    missing = np.isnan(X).any(axis=1) | raw[task_column].isna().to_numpy() | raw[user_column].isna().to_numpy()
    if missing.any():
        if na_policy == "error":
            raise ValueError(f"{int(missing.sum())} row(s) with missing values in {path}")
        keep = ~missing
        X = X[keep]
        raw = raw.loc[keep]
    if X.shape[0] == 0:
        raise ValueError(f"no rows left in {path} after dropping missing values")
    return Dataset(
        X,
        tuple(feature_cols),
        _coerce_labels(raw[task_column].reset_index(drop=True)),
        _coerce_labels(raw[user_column].reset_index(drop=True)),
    )


def write_csv(ds: Dataset, path: str | Path, task_column: str = "task", user_column: str = "user") -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.feature_names, task_column, user_column])
        for row, t, u in zip(ds.X.tolist(), ds.task_labels.tolist(), ds.user_labels.tolist()):
            w.writerow([*(repr(v) if not math.isnan(v) else "NaN" for v in row), t, u])
    return path


def from_arrays(
    X: Sequence[Sequence[float]] | np.ndarray,
    task_labels: Sequence,
    user_labels: Sequence,
    feature_names: Sequence[str] | None = None,
) -> Dataset:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{j}" for j in range(X.shape[1]))
    return Dataset(X, names, np.asarray(task_labels), np.asarray(user_labels))
