"""Dataset container, CSV round-tripping, standardization and stratified splits."""

from __future__ import annotations

import csv
import gzip
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "Dataset",
    "SplitPair",
    "load_csv",
    "save_csv",
    "standardize",
    "apply_standardization",
    "split",
    "stratified_counts",
]


class DataError(ValueError):
    """Raised for malformed input files or datasets violating preconditions."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix ``x`` (n samples by p descriptors) with binary labels.

    ``col_means``/``col_stds`` are set only on standardized datasets and hold
    the training-scale statistics of the retained columns.  ``dropped`` lists
    the constant columns removed during standardization.
    """

    x: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]
    standardized: bool = False
    col_means: np.ndarray | None = None
    col_stds: np.ndarray | None = None
    dropped: tuple[str, ...] = ()
    row_ids: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        x = np.array(self.x, dtype=float, copy=True)
        y = np.array(self.y, copy=True)
        if x.ndim != 2:
            raise DataError(f"x must be 2-D, got shape {x.shape}")
        n, p = x.shape
        if n < 2 or p < 1:
            raise DataError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if y.shape != (n,):
            raise DataError(f"y must have length {n}, got shape {y.shape}")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0 or 1")
        names = tuple(str(s) for s in self.names)
        if len(names) != p:
            raise DataError(f"expected {p} names, got {len(names)}")
        if len(set(names)) != p:
            raise DataError("duplicate descriptor names")
        if not np.all(np.isfinite(x)):
            raise DataError("x contains non-finite values")
        x.setflags(write=False)
        y = y.astype(np.int8)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", names)
        rid = np.arange(n) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        rid.setflags(write=False)
        object.__setattr__(self, "row_ids", rid)
        for attr in ("col_means", "col_stds"):
            v = getattr(self, attr)
            if v is not None:
                v = np.array(v, dtype=float)
                v.setflags(write=False)
                object.__setattr__(self, attr, v)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def class_counts(self) -> tuple[int, int]:
        pos = int(self.y.sum())
        return self.n - pos, pos

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return replace(self, x=self.x[rows], y=self.y[rows], row_ids=self.row_ids[rows])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.names == other.names
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
        )


@dataclass(frozen=True)
class SplitPair:
    train: Dataset
    test: Dataset
    seed: int
    train_fraction: float


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _open_text(path: Path, mode: str):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, mode + "b"), encoding="utf-8", newline="")
    return open(path, mode, encoding="utf-8", newline="")


def _parse_label(raw: str, positive_label: str | None, row: int) -> int:
    if positive_label is not None:
        return 1 if raw == positive_label else 0
    try:
        v = float(raw)
    except ValueError:
        v = math.nan
    if v == 0.0:
        return 0
    if v == 1.0:
        return 1
    raise DataError(f"label value {raw!r} at row {row} is not 0 or 1 (use a positive label mapping)")


def load_csv(path, label_column: str, positive_label: str | None = None) -> Dataset:
    """Read a header-first CSV (optionally ``.gz``) into an unstandardized Dataset.

    Without ``positive_label`` the label column must hold 0/1.  With it, cells
    equal to ``positive_label`` become 1 and every other value 0; more than two
    distinct label values is an error.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with _open_text(path, "r") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise DataError(f"{path}: duplicate column names {dupes}")
        if label_column not in header:
            raise DataError(f"{path}: unknown label column {label_column!r}")
        li = header.index(label_column)
        feat_idx = [i for i in range(len(header)) if i != li]
        rows, labels, raw_labels = [], [], set()
        for r, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {r} has {len(rec)} cells, expected {len(header)}")
            raw = rec[li].strip()
            raw_labels.add(raw)
            labels.append(_parse_label(raw, positive_label, r))
            vals = []
            for c in feat_idx:
                cell = rec[c].strip()
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise DataError(f"non-numeric cell at ({r}, {c + 1}): {cell!r}")
                vals.append(v)
            rows.append(vals)
    if positive_label is not None and len(raw_labels) > 2:
        raise DataError(f"{path}: label column has {len(raw_labels)} distinct values, expected 2")
    x = np.array(rows, dtype=float).reshape(len(rows), len(feat_idx))
    return Dataset(x=x, y=np.array(labels), names=tuple(header[i] for i in feat_idx))


def save_csv(d: Dataset, path, label_column: str = "label") -> None:
    """Write ``d`` with the label column first; floats use shortest round-trip repr."""
    path = Path(path)
    with _open_text(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([label_column, *d.names])
        for yi, row in zip(d.y, d.x):
            w.writerow([int(yi), *map(repr, row.tolist())])


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------


def standardize(d: Dataset) -> Dataset:
    """Center and scale every column to mean 0, population std 1.

    Constant columns are removed and listed in ``dropped``.  A dataset that is
    already standardized is returned unchanged.
    """
    if d.standardized:
        return d
    mean = d.x.mean(axis=0)
    centered = d.x - mean
    std = np.sqrt((centered**2).mean(axis=0))
    scale = np.maximum(np.abs(mean), 1.0)
    keep = std > 1e-12 * scale
    if not keep.any():
        raise DataError("all columns are constant")
    dropped = tuple(nm for nm, k in zip(d.names, keep) if not k)
    x = centered[:, keep] / std[keep]
    return replace(
        d,
        x=x,
        names=tuple(nm for nm, k in zip(d.names, keep) if k),
        standardized=True,
        col_means=mean[keep],
        col_stds=std[keep],
        dropped=d.dropped + dropped,
    )


def apply_standardization(d: Dataset, reference: Dataset) -> Dataset:
    """Scale ``d`` with the statistics stored on the standardized ``reference``."""
    if not reference.standardized:
        raise DataError("reference dataset is not standardized")
    index = {nm: i for i, nm in enumerate(d.names)}
    missing = [nm for nm in reference.names if nm not in index]
    if missing:
        raise DataError(f"dataset lacks descriptors {missing[:5]}")
    cols = [index[nm] for nm in reference.names]
    x = (d.x[:, cols] - reference.col_means) / reference.col_stds
    return replace(
        d,
        x=x,
        names=reference.names,
        standardized=True,
        col_means=reference.col_means,
        col_stds=reference.col_stds,
        dropped=reference.dropped,
    )


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------


def stratified_counts(class_sizes, fraction: float, rng: np.random.Generator) -> list[int]:
    """Per-class sample counts for one side of a stratified split.

    The total is ``round(fraction * n)``; it is spread across classes by
    largest remainder, so each class gets the floor or ceiling of its exact
    share.  Equal remainders are broken with ``rng``.
    """
    sizes = np.asarray(class_sizes, dtype=np.int64)
    exact = fraction * sizes
    base = np.floor(exact).astype(np.int64)
    total = int(math.floor(fraction * sizes.sum() + 0.5))
    extra = total - int(base.sum())
    rem = exact - base
    tiebreak = rng.random(len(sizes))
    order = np.lexsort((tiebreak, -rem))
    base[order[:extra]] += 1
    return base.tolist()


def split(d: Dataset, train_fraction: float, seed: int) -> SplitPair:
    """Stratified random train/test partition, deterministic in ``seed``."""
    if not 0 < train_fraction < 1:
        raise DataError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    classes = [np.flatnonzero(d.y == c) for c in (0, 1)]
    sizes = [len(c) for c in classes]
    if min(sizes) < 2:
        raise DataError(f"class too small to stratify (class sizes {sizes})")
    counts = stratified_counts(sizes, train_fraction, rng)
    train_rows, test_rows = [], []
    for members, k, size in zip(classes, counts, sizes):
        if k < 1 or k >= size:
            raise DataError(f"class too small to stratify (class of {size}, {k} to train)")
        perm = rng.permutation(members)
        train_rows.append(perm[:k])
        test_rows.append(perm[k:])
    tr = np.sort(np.concatenate(train_rows))
    te = np.sort(np.concatenate(test_rows))
    return SplitPair(d.subset(tr), d.subset(te), seed, train_fraction)


def stratified_folds(y, k: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per sample; every class is dealt round-robin after a shuffle."""
    y = np.asarray(y)
    fold = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in (0, 1):
        members = rng.permutation(np.flatnonzero(y == c))
        if len(members) < k:
            raise DataError(f"class {c} has {len(members)} samples, fewer than {k} folds")
        fold[members] = (np.arange(len(members)) + offset) % k
        offset += len(members)
    return fold
