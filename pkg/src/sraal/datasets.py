"""Synthetic feature-vector datasets and CSV ingestion.

Everything runs offline: blobs, two-moons, and rings generators produce
labeled feature matrices deterministically from a seed, and a small CSV
format (`f0,...,f{d-1}[,label]`, one header line) covers external data.

Features are standardized per dimension with statistics of the train split;
the test split is fixed at generation time and never enters any pool.
Labels live behind accessors so that training code can only read them for
ids it is entitled to (the labeled pool, or the test split at evaluation
time); in checked mode violations raise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TEST_FRACTION = 0.2
KINDS = ("gaussian-blobs", "two-moons", "rings")


class DataError(ValueError):
    """Malformed input data (CSV schema, label range, ragged rows)."""


class LabelLeakError(RuntimeError):
    """Checked-mode read of a label outside the permitted id set."""


class Dataset:
    """Feature matrix with oracle-held labels and a fixed train/test split."""

    def __init__(self, features, labels, n_classes, train_ids, test_ids, checked=False):
        self.features = np.asarray(features, dtype=np.float64)
        self._labels = np.asarray(labels, dtype=np.int64)
        self.n_classes = int(n_classes)
        self.train_ids = np.sort(np.asarray(train_ids, dtype=np.int64))
        self.test_ids = np.sort(np.asarray(test_ids, dtype=np.int64))
        self.checked = bool(checked)
        if len(self._labels) != len(self.features):
            raise ValueError(f"{len(self._labels)} labels for {len(self.features)} rows")
        if self._labels.size and (self._labels.min() < 0 or self._labels.max() >= n_classes):
            raise ValueError(f"labels outside [0, {n_classes})")
        if np.intersect1d(self.train_ids, self.test_ids).size:
            raise ValueError("train and test splits overlap")

    @property
    def n(self) -> int:
        return len(self.features)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def labels_of(self, ids, allowed) -> np.ndarray:
        """Labels for `ids`, which must fall inside the caller's entitlement.

        `allowed` names the ids the caller may read (its labeled pool, or the
        test split).  The subset check runs in checked mode only.
        """
        ids = np.asarray(ids, dtype=np.int64)
        if self.checked:
            outside = np.setdiff1d(ids, np.asarray(allowed, dtype=np.int64))
            if outside.size:
                raise LabelLeakError(f"label read outside permitted ids: {outside[:5].tolist()}")
        return self._labels[ids].copy()

    def oracle_labels(self, ids) -> np.ndarray:
        """Annotation request: the simulated oracle may label anything."""
        return self._labels[np.asarray(ids, dtype=np.int64)].copy()

    def test_labels(self) -> np.ndarray:
        return self.labels_of(self.test_ids, allowed=self.test_ids)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one generated dataset; identical specs yield identical data."""

    kind: str = "gaussian-blobs"
    n: int = 2000
    dim: int = 32
    n_classes: int = 8
    dispersion: float = 1.0
    center_radius: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}; expected one of {KINDS}")
        if self.n < self.n_classes:
            raise ValueError(f"n={self.n} smaller than class count {self.n_classes}")
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")
        if self.dispersion <= 0:
            raise ValueError(f"dispersion must be > 0, got {self.dispersion}")
        if self.kind == "two-moons" and self.n_classes != 2:
            raise ValueError("two-moons is a 2-class dataset")


def _balanced_labels(n: int, c: int) -> np.ndarray:
    counts = np.full(c, n // c)
    counts[: n % c] += 1
    return np.repeat(np.arange(c), counts)


def _embed_2d(xy: np.ndarray, spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Planar structure plus dispersion noise, padded to `dim` noise dimensions."""
    n = len(xy)
    out = rng.normal(0.0, spec.dispersion, size=(n, spec.dim))
    out[:, :2] += xy
    return out


def generate(spec: SyntheticSpec, checked: bool = False) -> Dataset:
    """Deterministic dataset for `spec`; see the module docstring for layout."""
    rng = np.random.default_rng(spec.seed)
    labels = _balanced_labels(spec.n, spec.n_classes)

    if spec.kind == "gaussian-blobs":
        directions = rng.normal(size=(spec.n_classes, spec.dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        centers = spec.center_radius * directions
        features = centers[labels] + rng.normal(0.0, spec.dispersion, size=(spec.n, spec.dim))
    elif spec.kind == "two-moons":
        t = rng.uniform(0.0, np.pi, size=spec.n)
        xy = np.where(
            (labels == 0)[:, None],
            np.column_stack([np.cos(t), np.sin(t)]),
            np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)]),
        )
        features = _embed_2d(xy, spec, rng)
    else:  # rings
        t = rng.uniform(0.0, 2.0 * np.pi, size=spec.n)
        radius = labels + 1.0
        xy = np.column_stack([radius * np.cos(t), radius * np.sin(t)])
        features = _embed_2d(xy, spec, rng)

    order = rng.permutation(spec.n)
    features, labels = features[order], labels[order]
    train_ids, test_ids = _stratified_split(labels, rng)
    features = _standardize(features, train_ids)
    return Dataset(features, labels, spec.n_classes, train_ids, test_ids, checked=checked)


def _stratified_split(labels: np.ndarray, rng: np.random.Generator):
    train, test = [], []
    for c in np.unique(labels):
        ids = np.flatnonzero(labels == c)
        ids = ids[rng.permutation(len(ids))]
        n_test = int(round(TEST_FRACTION * len(ids)))
        test.append(ids[:n_test])
        train.append(ids[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def _standardize(features: np.ndarray, train_ids: np.ndarray) -> np.ndarray:
    mu = features[train_ids].mean(axis=0)
    sigma = features[train_ids].std(axis=0)
    sigma = np.where(sigma == 0.0, 1.0, sigma)
    return (features - mu) / sigma


def read_csv(path, has_labels: bool):
    """Parse the feature CSV schema; returns (features, labels-or-None).

    Errors carry 1-based line numbers.  No standardization happens here.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip() and not line.startswith("#")]
    if not lines:
        raise DataError(f"{path}: empty file")
    header = lines[0].split(",")
    n_features = len(header) - (1 if has_labels else 0)
    if n_features < 1:
        raise DataError(f"{path}:1: header has no feature columns")
    expected = [f"f{i}" for i in range(n_features)] + (["label"] if has_labels else [])
    if header != expected:
        raise DataError(f"{path}:1: header {header!r} does not match {expected!r}")
    if len(lines) == 1:
        raise DataError(f"{path}: no data rows")

    rows, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(cells)}")
        try:
            values = [float(c) for c in cells[:n_features]]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-numeric cell") from exc
        rows.append(values)
        if has_labels:
            cell = cells[-1]
            try:
                label = int(cell)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: label {cell!r} is not an integer") from exc
            if label < 0:
                raise DataError(f"{path}:{lineno}: label {label} is negative")
            labels.append(label)
    features = np.asarray(rows, dtype=np.float64)
    return features, (np.asarray(labels, dtype=np.int64) if has_labels else None)


def load_csv(
    path,
    has_labels: bool = True,
    n_classes: int | None = None,
    split_seed: int = 0,
    standardize: bool = True,
    checked: bool = False,
):
    """Load a CSV into a Dataset (labeled) or a raw feature matrix (unlabeled).

    With labels, a stratified 80/20 split is drawn from `split_seed` and
    features are standardized with train statistics unless disabled.
    """
    features, labels = read_csv(path, has_labels)
    if not has_labels:
        return features
    c = int(labels.max()) + 1 if n_classes is None else int(n_classes)
    if labels.max() >= c:
        bad = int(np.argmax(labels >= c)) + 2
        raise DataError(f"{path}:{bad}: label {labels.max()} >= class count {c}")
    rng = np.random.default_rng(split_seed)
    train_ids, test_ids = _stratified_split(labels, rng)
    if standardize:
        features = _standardize(features, train_ids)
    return Dataset(features, labels, c, train_ids, test_ids, checked=checked)


def write_csv(path, features, labels=None) -> None:
    """Write features (and labels) in the schema that `read_csv` parses."""
    features = np.asarray(features, dtype=np.float64)
    header = [f"f{i}" for i in range(features.shape[1])]
    if labels is not None:
        header.append("label")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i, row in enumerate(features):
            cells = [repr(float(x)) for x in row]
            if labels is not None:
                cells.append(str(int(labels[i])))
            fh.write(",".join(cells) + "\n")
