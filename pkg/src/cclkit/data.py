"""Dataset synthesis, CSV ingestion, and the 4-way split protocol."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import rng_stream


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (N x d), integer labels in [0, K), class count, and a name."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ValueError("features must be N x d with one label per row")
        if x.shape[0] < 4:
            raise ValueError("dataset needs at least 4 rows")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain NaN/Inf")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(idx, dtype=np.int64)
        return self.features[idx], self.labels[idx]


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint index sets for target/shadow train/test."""

    target_train: np.ndarray
    target_test: np.ndarray
    shadow_train: np.ndarray
    shadow_test: np.ndarray
    seed: int = 0

    def parts(self):
        return (self.target_train, self.target_test, self.shadow_train, self.shadow_test)


def synth_blobs(num_classes: int, dim: int, n_per_class: int, spread: float, seed: int) -> Dataset:
    """Gaussian class clusters with unit-normal class centers; class-balanced."""
    if num_classes < 2 or dim < 1 or n_per_class < 1:
        raise ValueError("need num_classes >= 2, dim >= 1, n_per_class >= 1")
    if spread < 0:
        raise ValueError("spread must be >= 0")
    rng = rng_stream(seed, 0)
    centers = rng.normal(0.0, 1.0, size=(num_classes, dim))
    feats = np.empty((num_classes * n_per_class, dim))
    labels = np.empty(num_classes * n_per_class, dtype=np.int64)
    for c in range(num_classes):
        lo = c * n_per_class
        noise = rng.normal(0.0, 1.0, size=(n_per_class, dim))
        feats[lo : lo + n_per_class] = centers[c] + spread * noise
        labels[lo : lo + n_per_class] = c
    return Dataset(feats, labels, num_classes, name=f"blobs{num_classes}x{dim}")


def synth_binary_records(
    num_classes: int, dim: int, n_per_class: int, flip_prob: float, seed: int
) -> Dataset:
    """Per-class Bernoulli bit template with iid bit-flip noise."""
    if num_classes < 2 or dim < 1 or n_per_class < 1:
        raise ValueError("need num_classes >= 2, dim >= 1, n_per_class >= 1")
    if not 0.0 <= flip_prob <= 0.5:
        raise ValueError("flip_prob must be in [0, 0.5]")
    rng = rng_stream(seed, 0)
    templates = (rng.random(size=(num_classes, dim)) < 0.5).astype(np.float64)
    feats = np.empty((num_classes * n_per_class, dim))
    labels = np.empty(num_classes * n_per_class, dtype=np.int64)
    for c in range(num_classes):
        lo = c * n_per_class
        flips = rng.random(size=(n_per_class, dim)) < flip_prob
        feats[lo : lo + n_per_class] = np.abs(templates[c] - flips.astype(np.float64))
        labels[lo : lo + n_per_class] = c
    return Dataset(feats, labels, num_classes, name=f"binary{num_classes}x{dim}")


def load_csv(path: str, has_header: bool = False) -> Dataset:
    """Rows are d feature columns then one integer label column."""
    feats: list[list[float]] = []
    labels: list[int] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno == 1 and has_header:
                continue
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
                if width < 2:
                    raise ValueError(f"row {lineno}: need at least one feature and a label")
            elif len(cells) != width:
                raise ValueError(f"row {lineno}: expected {width} columns, got {len(cells)}")
            try:
                row = [float(c) for c in cells[:-1]]
                label = int(cells[-1])
            except ValueError as exc:
                raise ValueError(f"row {lineno}: non-numeric cell ({exc})") from None
            if label < 0:
                raise ValueError(f"row {lineno}: negative label {label}")
            feats.append(row)
            labels.append(label)
    if not feats:
        raise ValueError("CSV contains no data rows")
    y = np.asarray(labels, dtype=np.int64)
    return Dataset(np.asarray(feats), y, int(y.max()) + 1, name=path)


def save_csv(ds: Dataset, path: str, header: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            cols = [f"f{i}" for i in range(ds.dim)] + ["label"]
            fh.write(",".join(cols) + "\n")
        for x, y in zip(ds.features, ds.labels):
            fh.write(",".join(repr(float(v)) for v in x) + f",{int(y)}\n")


def split4(ds: Dataset, seed: int, stratify: bool = False) -> SplitPlan:
    """Seeded shuffle then contiguous quartering; remainder rows go to the
    earliest subsets so sizes differ by at most one."""
    n = len(ds)
    if n < 4:
        raise ValueError("split4 needs at least 4 rows")
    rng = rng_stream(seed, 0)
    if stratify:
        order_parts = []
        for c in range(ds.num_classes):
            idx = np.flatnonzero(ds.labels == c)
            order_parts.append(rng.permutation(idx))
        # interleave classes so each quarter stays close to class-balanced
        order = np.concatenate(
            [p[i::4] for i in range(4) for p in order_parts]
        )
    else:
        order = rng.permutation(n)
    base, rem = divmod(n, 4)
    sizes = [base + (1 if i < rem else 0) for i in range(4)]
    bounds = np.cumsum([0] + sizes)
    parts = [np.sort(order[bounds[i] : bounds[i + 1]]) for i in range(4)]
    return SplitPlan(parts[0], parts[1], parts[2], parts[3], seed=seed)
