"""Delimited numeric datasets: loading, z-scoring, splitting and batching."""

from __future__ import annotations

import csv
import gzip
import io
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .linalg import SeededRng, derive_seed, sample_permutation

STD_FLOOR = 1e-8


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


@dataclass
class Dataset:
    features: np.ndarray  # (N, D) float64
    labels: np.ndarray  # (N,) int64, zero-based
    feature_names: list[str] | None = None
    label_base: int = 0

    def __post_init__(self):
        if self.features.ndim != 2 or len(self.features) < 1:
            raise DataError(f"dataset needs at least one row, got shape {self.features.shape}")
        if self.labels.shape != (len(self.features),):
            raise DataError(f"{len(self.labels)} labels for {len(self.features)} rows")
        if not np.all(np.isfinite(self.features)):
            raise DataError("dataset contains non-finite features")
        if self.labels.min() < 0:
            raise DataError("labels must be non-negative after rebasing")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def raw_labels(self) -> np.ndarray:
        """Label values as they appeared in the source file."""
        return self.labels + self.label_base

    def subset(self, idx) -> "Dataset":
        return replace(self, features=self.features[idx], labels=self.labels[idx])


def _open_text(path: Path):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, encoding="utf-8", newline="")


def _label_index(label_column, width: int) -> int:
    if label_column == "last":
        return width - 1
    if label_column == "first":
        return 0
    idx = int(label_column)
    if not -width <= idx < width:
        raise DataError(f"label column {idx} outside a {width}-column file")
    return idx % width


def load_delimited(path, delimiter: str = ",", label_column="last", label_base: int = 1,
                   header: bool = False) -> Dataset:
    """Read a numeric table with one integer label column.

    Labels are shifted by ``label_base`` to start at 0. Blank lines are
    skipped. Any ragged row, non-numeric cell, or label below the base is
    reported with its 1-based line number.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    rows, labels = [], []
    names = None
    width = None
    lab = None
    with _open_text(path) as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if header and names is None:
                names = [c.strip() for c in row]
                width = len(row)
                lab = _label_index(label_column, width)
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise DataError(f"line {lineno}: need at least one feature and a label")
                lab = _label_index(label_column, width)
            elif len(row) != width:
                raise DataError(f"line {lineno}: expected {width} columns, found {len(row)}")
            try:
                values = [float(c) for c in row]
            except ValueError:
                bad = next(c for c in row if not _is_float(c))
                raise DataError(f"line {lineno}: non-numeric cell {bad!r}") from None
            y = values.pop(lab)
            if not float(y).is_integer() or y < label_base:
                raise DataError(f"line {lineno}: label {y!r} is not an integer >= {label_base}")
            if not all(np.isfinite(values)):
                raise DataError(f"line {lineno}: non-finite feature value")
            rows.append(values)
            labels.append(int(y) - label_base)
    if not rows:
        raise DataError(f"{path}: no data rows")
    if names is not None:
        names.pop(lab)
    return Dataset(np.asarray(rows, dtype=np.float64), np.asarray(labels, dtype=np.int64),
                   names, label_base)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def save_delimited(ds: Dataset, path, delimiter: str = ",") -> Path:
    """Write features then the original label value, one row per line."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        for row, y in zip(ds.features, ds.raw_labels):
            w.writerow([repr(float(v)) for v in row] + [int(y)])
    return path


# Cached binary form: b"BFID", u32 version, u32 N, u32 D, i64 label_base,
# then f64[N*D] row-major features and i64[N] zero-based labels, little-endian.
DATA_MAGIC = b"BFID"


def save_binary(ds: Dataset, path) -> Path:
    path = Path(path)
    N, D = ds.features.shape
    with open(path, "wb") as fh:
        fh.write(DATA_MAGIC + struct.pack("<IIIq", 1, N, D, ds.label_base))
        fh.write(np.ascontiguousarray(ds.features, "<f8").tobytes())
        fh.write(np.ascontiguousarray(ds.labels, "<i8").tobytes())
    return path


def load_binary(path) -> Dataset:
    data = Path(path).read_bytes()
    if data[:4] != DATA_MAGIC:
        raise DataError(f"{path}: not a BFID file")
    version, N, D, base = struct.unpack_from("<IIIq", data, 4)
    if version != 1:
        raise DataError(f"{path}: unsupported BFID version {version}")
    off = 4 + struct.calcsize("<IIIq")
    if len(data) != off + 8 * N * D + 8 * N:
        raise DataError(f"{path}: size does not match header")
    feats = np.frombuffer(data, "<f8", N * D, off).reshape(N, D).astype(np.float64)
    labels = np.frombuffer(data, "<i8", N, off + 8 * N * D).astype(np.int64)
    return Dataset(feats, labels, None, base)


@dataclass(frozen=True)
class StandardizeStats:
    mean: np.ndarray
    std: np.ndarray


def fit_standardize(train: Dataset) -> StandardizeStats:
    """Per-column mean and population std, std floored at 1e-8."""
    if len(train) < 2:
        raise DataError("standardization needs at least two rows")
    mean = train.features.mean(axis=0)
    std = np.maximum(train.features.std(axis=0), STD_FLOOR)
    return StandardizeStats(mean, std)


def apply_standardize(stats: StandardizeStats, ds: Dataset) -> Dataset:
    return replace(ds, features=(ds.features - stats.mean) / stats.std)


def standardize(train: Dataset) -> tuple[StandardizeStats, Dataset]:
    stats = fit_standardize(train)
    return stats, apply_standardize(stats, train)


def split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded row shuffle, then the first ``round(N * fraction)`` rows train."""
    if not 0 < train_fraction < 1:
        raise DataError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n_train = int(round(len(ds) * train_fraction))
    if n_train == 0 or n_train == len(ds):
        raise DataError(f"split of {len(ds)} rows at {train_fraction} leaves one side empty")
    order = sample_permutation(len(ds), SeededRng(seed))
    return ds.subset(order[:n_train]), ds.subset(order[n_train:])


def batches(ds_or_n, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Index arrays for one epoch; the order is a function of (seed, epoch)."""
    if batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {batch_size}")
    n = ds_or_n if isinstance(ds_or_n, (int, np.integer)) else len(ds_or_n)
    order = sample_permutation(n, SeededRng(derive_seed(seed, epoch)))
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]
