"""Synthetic datasets with planted feature roles, and a brute-force oracle.

Every label-dependent feature emits ``label_index + U(0, 1)`` with probability
``signal_strength`` and ``U(0, K)`` otherwise, K being the number of label
values. Shared features encode the joint (task, user) index, so they inform
both labelings. Task and user labels are drawn independently.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from datamin.forest import ForestConfig, evaluate_pair
from datamin.tabular import Dataset, FeatureSubset, SplitSpec

ORACLE_MAX_FEATURES = 10


@dataclass(frozen=True)
class SynthSpec:
    n_rows: int = 600
    n_classes: int = 3
    n_users: int = 6
    task_only: int = 2
    user_only: int = 2
    shared: int = 1
    noise: int = 1
    signal_strength: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 2:
            raise ValueError("n_rows must be >= 2")
        if self.n_classes < 2 or self.n_users < 2:
            raise ValueError("need at least two classes and two users")
        counts = (self.task_only, self.user_only, self.shared, self.noise)
        if min(counts) < 0 or sum(counts) < 1:
            raise ValueError("feature counts must be non-negative with at least one feature")
        if not 0.0 < self.signal_strength <= 1.0:
            raise ValueError("signal_strength must lie in (0, 1]")

    @property
    def n_features(self) -> int:
        return self.task_only + self.user_only + self.shared + self.noise

    def roles(self) -> list[str]:
        return (["task"] * self.task_only + ["user"] * self.user_only
                + ["shared"] * self.shared + ["noise"] * self.noise)


PRESETS = {
    # small enough for full enumeration
    "tiny": SynthSpec(n_rows=300, n_classes=3, n_users=5, task_only=2, user_only=1, shared=1, noise=1,
                      signal_strength=0.8),
    # a few informative features with separate roles, d=20
    "dense": SynthSpec(n_rows=600, n_classes=4, n_users=8, task_only=6, user_only=4, shared=4, noise=6,
                       signal_strength=0.9),
    # same layout at lower signal; full-set task accuracy comparable to "sparse"
    "dense_matched": SynthSpec(n_rows=1500, n_classes=4, n_users=8, task_only=6, user_only=4, shared=4,
                               noise=6, signal_strength=0.5),
    # many weak features that each carry a little of both labelings, d=200
    "sparse": SynthSpec(n_rows=1500, n_classes=4, n_users=8, task_only=0, user_only=0, shared=200, noise=0,
                        signal_strength=0.35),
}


def _emit(rng: np.random.Generator, codes: np.ndarray, k: int, s: float) -> np.ndarray:
    n = len(codes)
    signal = rng.random(n) < s
    jitter = rng.random(n)
    uniform = rng.random(n) * k
    return np.where(signal, codes + jitter, uniform)


def generate(spec: SynthSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    task = rng.integers(0, spec.n_classes, spec.n_rows)
    user = rng.integers(0, spec.n_users, spec.n_rows)
    joint = task * spec.n_users + user
    cols, names = [], []
    sources = {"task": (task, spec.n_classes), "user": (user, spec.n_users),
               "shared": (joint, spec.n_classes * spec.n_users)}
    seen = {}
    for role in spec.roles():
        i = seen.get(role, 0)
        seen[role] = i + 1
        names.append(f"{role}_{i}")
        if role == "noise":
            cols.append(rng.random(spec.n_rows))
        else:
            codes, k = sources[role]
            cols.append(_emit(rng, codes, k, spec.signal_strength))
    return Dataset(np.column_stack(cols), tuple(names), task, user)


@dataclass(frozen=True)
class OracleTable:
    """Every non-empty subset's (task accuracy, identifiability)."""

    n_features: int
    entries: dict  # tuple of indices -> (accuracy, identifiability)

    def __post_init__(self):
        if len(self.entries) != 2 ** self.n_features - 1:
            raise ValueError("oracle table must cover every non-empty subset")

    def to_json(self) -> str:
        rows = [{"subset": list(k), "accuracy": a, "identifiability": i} for k, (a, i) in self.entries.items()]
        return json.dumps({"version": 1, "n_features": self.n_features, "entries": rows}, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "OracleTable":
        doc = json.loads(text)
        return cls(doc["n_features"], {tuple(r["subset"]): (r["accuracy"], r["identifiability"])
                                       for r in doc["entries"]})


def oracle_enumerate(ds: Dataset, split: SplitSpec, cfg: ForestConfig) -> OracleTable:
    """Plain sequential loop over subsets by size, one evaluate_pair call each."""
    d = ds.n_features
    if d > ORACLE_MAX_FEATURES:
        raise ValueError(f"oracle enumeration is limited to {ORACLE_MAX_FEATURES} features, got {d}")
    entries = {}
    for size in range(1, d + 1):
        for combo in itertools.combinations(range(d), size):
            entries[combo] = evaluate_pair(ds, FeatureSubset(combo), split, cfg)
    return OracleTable(d, entries)


def oracle_select(table: OracleTable, threshold: float, base_accuracy: float | None = None) -> tuple[int, ...]:
    """Least identifiable subset with accuracy >= (1 - threshold) * base.

    The base defaults to the best accuracy in the table. Ties go to fewer
    features, then higher accuracy, then the lexicographically smaller subset.
    """
    if base_accuracy is None:
        base_accuracy = max(a for a, _ in table.entries.values())
    floor = (1.0 - threshold) * base_accuracy - 1e-12
    ok = [(ident, len(s), -acc, s) for s, (acc, ident) in table.entries.items() if acc >= floor]
    ok.sort()
    return ok[0][3]


def save_fixture(spec: SynthSpec, split: SplitSpec, cfg: ForestConfig, directory: str | Path) -> Path:
    from datamin.tabular import write_csv

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ds = generate(spec)
    write_csv(ds, directory / "data.csv")
    (directory / "oracle.json").write_text(oracle_enumerate(ds, split, cfg).to_json())
    (directory / "spec.json").write_text(json.dumps(
        {"synth": asdict(spec), "split": asdict(split), "forest": asdict(cfg)}, indent=1) + "\n")
    return directory
