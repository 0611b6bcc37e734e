"""Dataset ingestion, normalization, constraint sampling and fold splitting.

All randomized operations take an explicit integer seed and are bit-reproducible
for a fixed seed. Datasets are immutable once constructed; operations return new
objects instead of mutating.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BadFoldCount, InfeasibleRequest, ParseError

# Rejection sampling gives up after this many attempts per requested pair.
SAMPLE_ATTEMPT_FACTOR = 50


@dataclass(frozen=True)
class Dataset:
    """An N x d feature matrix with optional integer class labels."""

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] < 1:
            raise ValueError("points must be an N x d matrix with N >= 2, d >= 1")
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            labs = np.asarray(self.labels, dtype=np.int64)
            if labs.shape != (pts.shape[0],):
                raise ValueError("labels must have length N")
            object.__setattr__(self, "labels", labs)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n_points)

    def subset(self, indices) -> "Dataset":
        """New dataset holding the given rows (labels sliced alongside)."""
        idx = np.asarray(indices)
        labels = self.labels[idx] if self.labels is not None else None
        return Dataset(self.points[idx], labels)


@dataclass(frozen=True)
class NormStats:
    """Per-feature affine normalization statistics (population std, divisor N)."""

    mean: np.ndarray
    stddev: np.ndarray

    def apply(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows, dtype=np.float64) - self.mean) / self.stddev

    def invert(self, rows: np.ndarray) -> np.ndarray:
        return np.asarray(rows, dtype=np.float64) * self.stddev + self.mean


@dataclass(frozen=True)
class ConstraintSet:
    """Must-link and cannot-link point-index pairs, stored canonically (i < j)."""

    must_link: np.ndarray
    cannot_link: np.ndarray

    def __post_init__(self):
        ml = _canonical_pairs(self.must_link)
        cl = _canonical_pairs(self.cannot_link)
        both = set(map(tuple, ml)) & set(map(tuple, cl))
        if both:
            raise ValueError(f"pairs present in both lists: {sorted(both)[:5]}")
        object.__setattr__(self, "must_link", ml)
        object.__setattr__(self, "cannot_link", cl)

    @property
    def n_must_link(self) -> int:
        return len(self.must_link)

    @property
    def n_cannot_link(self) -> int:
        return len(self.cannot_link)


def _canonical_pairs(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if arr.size == 0:
        return arr
    if np.any(arr[:, 0] == arr[:, 1]):
        raise ValueError("constraint pairs must join two distinct points")
    arr = np.sort(arr, axis=1)
    seen = set(map(tuple, arr))
    if len(seen) != len(arr):
        raise ValueError("duplicate constraint pairs after canonical ordering")
    return arr


def load_dataset(path, fmt: str = "csv", label_column: bool = False,
                 header: bool = False) -> Dataset:
    """Load a dataset from a CSV or libsvm file.

    CSV rows are plain comma-separated numbers; ``label_column`` treats the
    last column as an integer class id, ``header`` skips the first line.
    libsvm lines are ``label idx:val ...`` with 1-based feature indices;
    missing features are zero and the width is the largest index seen.
    """
    if fmt == "csv":
        return _load_csv(path, label_column=label_column, header=header)
    if fmt == "libsvm":
        return _load_libsvm(path)
    raise ValueError(f"unknown dataset format: {fmt!r}")


def _load_csv(path, label_column: bool, header: bool) -> Dataset:
    rows, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        width = None
        for lineno, rec in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise ParseError(f"row {lineno}: expected {width} fields, got {len(rec)}")
            try:
                vals = [float(f) for f in rec]
            except ValueError as exc:
                raise ParseError(f"row {lineno}: non-numeric field ({exc})") from None
            if label_column:
                lab = vals[-1]
                if lab != int(lab):
                    raise ParseError(f"row {lineno}: label column is not an integer")
                labels.append(int(lab))
                vals = vals[:-1]
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    points = np.asarray(rows, dtype=np.float64)
    return Dataset(points, np.asarray(labels) if label_column else None)


def _load_libsvm(path) -> Dataset:
    entries, labels, max_idx = [], [], 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            try:
                labels.append(int(float(fields[0])))
            except ValueError:
                raise ParseError(f"row {lineno}: bad label {fields[0]!r}") from None
            row = {}
            for tok in fields[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise ParseError(f"row {lineno}: bad feature token {tok!r}") from None
                if idx < 1:
                    raise ParseError(f"row {lineno}: feature indices are 1-based")
                row[idx] = val
                max_idx = max(max_idx, idx)
            entries.append(row)
    if not entries:
        raise ParseError(f"{path}: no data rows")
    points = np.zeros((len(entries), max_idx), dtype=np.float64)
    for i, row in enumerate(entries):
        for idx, val in row.items():
            points[i, idx - 1] = val
    return Dataset(points, np.asarray(labels))


def normalize(data: Dataset) -> tuple[Dataset, NormStats]:
    """Center each feature and scale to unit population variance.

    Constant features get a recorded stddev of 1 so the transform stays
    affine and invertible; their column becomes all zeros.
    """
    mean = data.points.mean(axis=0)
    std = data.points.std(axis=0)  # population, divisor N
    std = np.where(std > 0.0, std, 1.0)
    stats = NormStats(mean=mean, stddev=std)
    return Dataset(stats.apply(data.points), data.labels), stats


def sample_constraints(labels, count_ml: int, count_cl: int,
                       rng_seed: int) -> ConstraintSet:
    """Sample distinct same-label and cross-label pairs uniformly.

    Seeded rejection sampling; raises InfeasibleRequest when the labels
    cannot supply the requested number of distinct pairs within the
    attempt budget.
    """
    labs = np.asarray(labels, dtype=np.int64)
    n = len(labs)
    rng = np.random.default_rng(rng_seed)
    ml = _rejection_sample(rng, labs, n, count_ml, same_label=True)
    cl = _rejection_sample(rng, labs, n, count_cl, same_label=False)
    return ConstraintSet(ml, cl)


def _rejection_sample(rng, labs, n, count, same_label):
    if count < 0:
        raise ValueError("constraint counts must be >= 0")
    kind = "must-link" if same_label else "cannot-link"
    chosen: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    budget = SAMPLE_ATTEMPT_FACTOR * count
    attempts = 0
    while len(chosen) < count:
        if attempts >= budget:
            raise InfeasibleRequest(
                f"could not draw {count} distinct {kind} pairs "
                f"after {attempts} attempts")
        attempts += 1
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        if (labs[i] == labs[j]) != same_label:
            continue
        pair = (int(min(i, j)), int(max(i, j)))
        if pair in seen:
            continue
        seen.add(pair)
        chosen.append(pair)
    return np.asarray(chosen, dtype=np.int64).reshape(-1, 2)


def flip_labels(labels, rate: float, rng_seed: int) -> np.ndarray:
    """Reassign exactly round(rate * N) points to a uniformly chosen other class."""
    labs = np.asarray(labels, dtype=np.int64).copy()
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    classes = np.unique(labs)
    if len(classes) < 2:
        raise ValueError("label flipping needs at least 2 classes")
    n_flip = int(round(rate * len(labs)))
    if n_flip == 0:
        return labs
    rng = np.random.default_rng(rng_seed)
    victims = rng.choice(len(labs), size=n_flip, replace=False)
    for i in victims:
        others = classes[classes != labs[i]]
        labs[i] = others[rng.integers(0, len(others))]
    return labs


def split_folds(data: Dataset, k: int, rng_seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled k-fold partition; returns (train_idx, test_idx) per fold.

    Test sizes differ by at most 1 and the test folds partition [0, N).
    """
    n = data.n_points
    if k < 2 or k > n:
        raise BadFoldCount(f"fold count {k} outside [2, {n}]")
    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(n)
    base, extra = divmod(n, k)
    folds = []
    start = 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        test = np.sort(order[start:start + size])
        train = np.sort(np.concatenate([order[:start], order[start + size:]]))
        folds.append((train, test))
        start += size
    return folds


def save_constraints(constraints: ConstraintSet, path) -> None:
    """Write constraint pairs as CSV lines ``i,j,ML`` / ``i,j,CL``."""
    with open(path, "w") as fh:
        for i, j in constraints.must_link:
            fh.write(f"{i},{j},ML\n")
        for i, j in constraints.cannot_link:
            fh.write(f"{i},{j},CL\n")


def load_constraints(path) -> ConstraintSet:
    ml, cl = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3 or parts[2] not in ("ML", "CL"):
                raise ParseError(f"row {lineno}: expected 'i,j,ML|CL', got {line!r}")
            try:
                pair = (int(parts[0]), int(parts[1]))
            except ValueError:
                raise ParseError(f"row {lineno}: non-integer index") from None
            (ml if parts[2] == "ML" else cl).append(pair)
    return ConstraintSet(np.asarray(ml, dtype=np.int64).reshape(-1, 2),
                         np.asarray(cl, dtype=np.int64).reshape(-1, 2))
