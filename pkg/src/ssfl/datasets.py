"""Dataset sources: synthetic generators, IDX image files, and CSV tables.

Every loader returns ``(x_train, y_train, x_test, y_test)`` with float64
inputs and int64 labels. Images come back as (N, 1, H, W) scaled to [0, 1].
"""
import csv
import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError, InvalidInputError

DATASET_KINDS = ("synthetic_blobs", "synthetic_rings", "idx_images", "csv")

_IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


@dataclass(frozen=True)
class DatasetSource:
    kind: str = "synthetic_blobs"
    num_classes: int = 10
    dims: int = 16
    samples: int = 20000
    test_samples: int = 4000
    seed: int = 7
    center_scale: float = 1.5
    noise: float = 1.0
    images: str = ""
    labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    path: str = ""
    label_column: str = "label"
    test_fraction: float = 0.2
    limit: int = 0

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise InvalidInputError(f"unknown dataset kind {self.kind!r}")


def synthetic_blobs(d, dims, samples, seed, test_samples=0, center_scale=1.0, noise=1.0):
    """Gaussian class clusters around random centers; classes are balanced."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, center_scale, size=(d, dims))

    def draw(n):
        counts = [n // d + (1 if j < n % d else 0) for j in range(d)]
        y = np.repeat(np.arange(d), counts)
        x = centers[y] + rng.normal(0.0, noise, size=(n, dims))
        perm = rng.permutation(n)
        return x[perm], y[perm].astype(np.int64)

    xtr, ytr = draw(samples)
    xte, yte = draw(test_samples) if test_samples else (np.empty((0, dims)), np.empty(0, np.int64))
    return xtr, ytr, xte, yte


def synthetic_rings(d, dims, samples, seed, test_samples=0, noise=0.15):
    """Concentric rings in the first two coordinates, one per class; the
    remaining coordinates are pure noise."""
    if dims < 2:
        raise InvalidInputError("rings need at least two dimensions")
    rng = np.random.default_rng(seed)

    def draw(n):
        counts = [n // d + (1 if j < n % d else 0) for j in range(d)]
        y = np.repeat(np.arange(d), counts)
        theta = rng.uniform(0, 2 * np.pi, size=n)
        r = 1.0 + y + rng.normal(0.0, noise, size=n)
        x = rng.normal(0.0, noise, size=(n, dims))
        x[:, 0] = r * np.cos(theta)
        x[:, 1] = r * np.sin(theta)
        perm = rng.permutation(n)
        return x[perm], y[perm].astype(np.int64)

    xtr, ytr = draw(samples)
    xte, yte = draw(test_samples) if test_samples else (np.empty((0, dims)), np.empty(0, np.int64))
    return xtr, ytr, xte, yte


def read_idx(path):
    if not os.path.exists(path):
        raise DatasetError(f"{path}: no such file")
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0 or raw[2] not in _IDX_DTYPES:
        raise DatasetError(f"{path}: bad IDX magic number")
    ndim = raw[3]
    if len(raw) < 4 + 4 * ndim:
        raise DatasetError(f"{path}: truncated IDX header")
    shape = struct.unpack(">" + "I" * ndim, raw[4:4 + 4 * ndim])
    dtype = _IDX_DTYPES[raw[2]]
    count = int(np.prod(shape, dtype=np.int64))
    body = raw[4 + 4 * ndim:]
    if len(body) != count * dtype.itemsize:
        raise DatasetError(f"{path}: payload size does not match header {shape}")
    return np.frombuffer(body, dtype=dtype).reshape(shape)


def _idx_pair(images, labels, limit):
    x = read_idx(images)
    y = read_idx(labels)
    if x.ndim != 3 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise DatasetError(f"{images}/{labels}: expected (N, H, W) images and N labels")
    if limit:
        x, y = x[:limit], y[:limit]
    x = x.astype(np.float64)
    if x.max(initial=0) > 1.0:
        x = x / 255.0
    return x[:, None, :, :], y.astype(np.int64)


def load_csv(path, label_column, num_classes, test_fraction, seed):
    if not os.path.exists(path):
        raise DatasetError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DatasetError(f"{path}: needs a header row and data")
    header, body = rows[0], rows[1:]
    if label_column in header:
        li = header.index(label_column)
    else:
        try:
            li = int(label_column)
        except ValueError:
            raise DatasetError(f"{path}: no column {label_column!r}") from None
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise DatasetError(f"{path}: non-numeric cell ({exc})") from None
    y = data[:, li]
    x = np.delete(data, li, axis=1)
    if not np.all(y == np.round(y)):
        raise DatasetError(f"{path}: labels must be integers")
    y = y.astype(np.int64)
    n_test = int(round(len(y) * test_fraction))
    perm = np.random.default_rng(seed).permutation(len(y))
    te, tr = perm[:n_test], perm[n_test:]
    return x[tr], y[tr], x[te], y[te]


def validate_labels(y, num_classes, where="dataset"):
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise DatasetError(f"{where}: labels must lie in [0, {num_classes})")


def load_dataset(source):
    s = source
    if s.kind == "synthetic_blobs":
        out = synthetic_blobs(s.num_classes, s.dims, s.samples, s.seed, s.test_samples, s.center_scale, s.noise)
    elif s.kind == "synthetic_rings":
        out = synthetic_rings(s.num_classes, s.dims, s.samples, s.seed, s.test_samples, s.noise)
    elif s.kind == "idx_images":
        xtr, ytr = _idx_pair(s.images, s.labels, s.limit)
        if s.test_images:
            xte, yte = _idx_pair(s.test_images, s.test_labels, s.limit)
        else:
            xte, yte = np.empty((0,) + xtr.shape[1:]), np.empty(0, np.int64)
        out = (xtr, ytr, xte, yte)
    else:
        out = load_csv(s.path, s.label_column, s.num_classes, s.test_fraction, s.seed)
    validate_labels(out[1], s.num_classes, "train labels")
    validate_labels(out[3], s.num_classes, "test labels")
    return out
