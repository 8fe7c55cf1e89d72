"""Dataset ingestion, PCA reduction, stratified splits, synthetic blobs.

Loaders are strict: malformed inputs raise instead of being coerced.
"""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    features: np.ndarray  # [N, D] float
    labels: np.ndarray  # [N] int in [0, n_classes)
    split: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or len(self.labels) != len(self.features):
            raise ValueError("features must be [N, D] with matching labels")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain NaN or Inf")
        if len(self.labels) and self.labels.min() < 0:
            raise ValueError("labels must be non-negative")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def with_labels(self, labels: np.ndarray, split: str | None = None) -> "Dataset":
        return Dataset(self.features, labels, self.split if split is None else split)


def load_mnist_idx(image_path, label_path) -> Dataset:
    """Read big-endian IDX image/label files; pixels scaled to [0, 1]."""
    with open(image_path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise ValueError(f"{image_path}: truncated IDX header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGE_MAGIC:
            raise ValueError(f"{image_path}: bad magic 0x{magic:08x}")
        payload = fh.read()
    if len(payload) < count * rows * cols:
        raise ValueError(f"{image_path}: truncated pixel payload")
    pixels = np.frombuffer(payload[: count * rows * cols], dtype=np.uint8)
    features = pixels.reshape(count, rows * cols).astype(float) / 255.0

    with open(label_path, "rb") as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise ValueError(f"{label_path}: truncated IDX header")
        magic, label_count = struct.unpack(">II", header)
        if magic != IDX_LABEL_MAGIC:
            raise ValueError(f"{label_path}: bad magic 0x{magic:08x}")
        raw = fh.read()
    if len(raw) < label_count:
        raise ValueError(f"{label_path}: truncated label payload")
    if label_count != count:
        raise ValueError(
            f"image/label count mismatch: {count} images vs {label_count} labels"
        )
    labels = np.frombuffer(raw[:label_count], dtype=np.uint8).astype(int)
    return Dataset(features, labels)


def load_csv_features(path) -> Dataset:
    """CSV with header ``label,f0,...,fD-1``; labels densified to [0, C)."""
    rows = []
    labels = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        if not header or header[0] != "label":
            raise ValueError(f"{path}: first header column must be 'label'")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width:
                raise ValueError(f"{path}: line {lineno}: expected {width} cells, got {len(row)}")
            try:
                labels.append(int(float(row[0])))
                rows.append([float(c) for c in row[1:]])
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: non-numeric cell") from exc
    if not rows:
        raise ValueError(f"{path}: no data rows")
    raw_labels = np.array(labels)
    dense = {lab: i for i, lab in enumerate(sorted(set(labels)))}
    return Dataset(np.array(rows), np.array([dense[l] for l in raw_labels]))


@dataclass
class PcaModel:
    mean: np.ndarray  # [D]
    components: np.ndarray  # [k, D], row-orthonormal
    explained_variance: np.ndarray  # [k], non-increasing


def pca_fit(train_features: np.ndarray, k: int) -> PcaModel:
    """Top-k right singular vectors of the centered training matrix, with
    each component's largest-magnitude coordinate made positive."""
    X = np.asarray(train_features, dtype=float)
    n, d = X.shape
    if k > min(n, d):
        raise ValueError(f"k={k} exceeds min(N, D)={min(n, d)}")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    components = vt[:k].copy()
    for row in components:
        j = np.argmax(np.abs(row))
        if row[j] < 0:
            row *= -1.0
    denom = max(n - 1, 1)
    variance = s[:k] ** 2 / denom
    if np.any(variance < 1e-12):
        warnings.warn("PCA produced zero-variance components", stacklevel=2)
    return PcaModel(mean, components, variance)


def pca_transform(model: PcaModel, features: np.ndarray) -> np.ndarray:
    return (np.asarray(features, dtype=float) - model.mean) @ model.components.T


def stratified_sample(
    dataset: Dataset, per_class_train: int, per_class_test: int, rng: np.random.Generator
) -> tuple[Dataset, Dataset]:
    """Disjoint per-class train/test splits with exactly the requested counts."""
    train_idx, test_idx = [], []
    for c in range(dataset.n_classes):
        members = np.flatnonzero(dataset.labels == c)
        need = per_class_train + per_class_test
        if len(members) < need:
            raise ValueError(
                f"class {c} has {len(members)} samples, needs {need} for the split"
            )
        perm = rng.permutation(members)
        train_idx.extend(perm[:per_class_train])
        test_idx.extend(perm[per_class_train : per_class_train + per_class_test])
    train_idx = np.array(train_idx)
    test_idx = np.array(test_idx)
    return (
        Dataset(dataset.features[train_idx], dataset.labels[train_idx], "train"),
        Dataset(dataset.features[test_idx], dataset.labels[test_idx], "test"),
    )


def synth_blobs(
    n_classes: int, dim: int, per_class: int, spread: float, rng: np.random.Generator
) -> Dataset:
    """Gaussian clusters around seeded random centers in the unit box."""
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    centers = rng.uniform(0.0, 1.0, size=(n_classes, dim))
    features = np.concatenate(
        [centers[c] + spread * rng.standard_normal((per_class, dim)) for c in range(n_classes)]
    )
    labels = np.repeat(np.arange(n_classes), per_class)
    return Dataset(features, labels)
