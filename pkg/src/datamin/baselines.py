"""Non-game baselines: signed feature hashing, PCA and per-feature Laplace noise.

Each transform returns a new Dataset with the same rows and labelings, so the
result can go straight into the same accuracy/identifiability evaluation as a
feature subset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from datamin.tabular import Dataset

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


@dataclass(frozen=True)
class HashSpec:
    buckets: int
    signed: bool = True
    hash_name: str = "fnv1a64"

    def __post_init__(self):
        if self.buckets < 1:
            raise ValueError("buckets must be >= 1")
        if self.hash_name != "fnv1a64":
            raise ValueError(f"unsupported hash {self.hash_name!r}")


@dataclass(frozen=True)
class PcaSpec:
    components: int
    standardize: bool = True


@dataclass(frozen=True)
class DpSpec:
    epsilon: float
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def hash_slot(name: str, buckets: int, signed: bool = True) -> tuple[int, int]:
    """(bucket, sign) for a feature name.

    The sign is the parity of the hash's set bits, so it is not tied to the
    low bits that pick the bucket.
    """
    h = fnv1a64(name.encode("utf-8"))
    sign = -1 if signed and bin(h).count("1") & 1 else 1
    return h % buckets, sign


def hash_features(ds: Dataset, spec: HashSpec) -> Dataset:
    out = np.zeros((ds.rows, spec.buckets))
    for j, name in enumerate(ds.feature_names):
        bucket, sign = hash_slot(name, spec.buckets, spec.signed)
        out[:, bucket] += sign * ds.X[:, j]
    names = tuple(f"h{b}" for b in range(spec.buckets))
    return Dataset(out, names, ds.task_labels, ds.user_labels)


@dataclass(frozen=True)
class PcaFit:
    mean: np.ndarray
    scale: np.ndarray
    components: np.ndarray  # (k, d), rows are unit directions
    explained_variance: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        return ((X - self.mean) / self.scale) @ self.components.T


def pca_fit(X: np.ndarray, components: int, standardize: bool = True) -> PcaFit:
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least two rows")
    if not 1 <= components <= min(n, d):
        raise ValueError(f"components must lie in [1, {min(n, d)}], got {components}")
    mean = X.mean(axis=0)
    scale = np.ones(d)
    if standardize:
        sd = X.std(axis=0)
        scale = np.where(sd > 0, sd, 1.0)
    Z = (X - mean) / scale
    _, s, vt = np.linalg.svd(Z, full_matrices=False)
    vt = vt[:components]
    # make the largest-magnitude loading of every direction positive
    pivot = np.argmax(np.abs(vt), axis=1)
    vt = vt * np.sign(vt[np.arange(components), pivot])[:, None]
    return PcaFit(mean, scale, vt, (s[:components] ** 2) / (n - 1))


def pca_transform(ds: Dataset, spec: PcaSpec) -> Dataset:
    fit = pca_fit(ds.X, spec.components, spec.standardize)
    names = tuple(f"pc{k}" for k in range(spec.components))
    return Dataset(fit.transform(ds.X), names, ds.task_labels, ds.user_labels)


def dp_noise(ds: Dataset, spec: DpSpec) -> Dataset:
    """Laplace noise per feature with scale (max - min) / epsilon."""
    rng = np.random.default_rng(spec.seed)
    span = ds.X.max(axis=0) - ds.X.min(axis=0)
    noise = rng.laplace(0.0, 1.0, size=ds.X.shape) * (span / spec.epsilon)
    return Dataset(ds.X + noise, ds.feature_names, ds.task_labels, ds.user_labels)
