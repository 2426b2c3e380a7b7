"""Datasets, IDX (MNIST) I/O and client partitioning.

All randomness comes from :func:`make_rng`, which keys a PCG64 generator on
``(seed, stream, *extra)`` so that data generation, partitioning, client
sampling and initialization never share state.
"""

from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

Array = np.ndarray

# Stream tags for make_rng; values are part of the reproducibility contract.
STREAM_DATA = 0
STREAM_PARTITION = 1
STREAM_SAMPLING = 2
STREAM_INIT = 3

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

SYNTHETIC_NOISE_STD = 0.1
STUDENT_T_DF = 5


def make_rng(seed: int, stream: int, *extra: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream, *extra])))


@dataclass
class Dataset:
    features: Array
    targets: Array
    kind: Literal["regression", "classification"]
    # Extra facts needed to audit how the data was produced (e.g. planted weights).
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        if self.targets.shape != (self.features.shape[0],):
            raise ValueError(
                f"targets shape {self.targets.shape} does not match {self.features.shape[0]} rows"
            )

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: Array) -> "DataShard":
        idx = np.asarray(idx, dtype=np.int64)
        return DataShard(self.features[idx], self.targets[idx], idx)


@dataclass
class DataShard:
    """One client's local data."""

    features: Array
    targets: Array
    indices: Array | None = None

    def __post_init__(self):
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValueError("features and targets disagree on sample count")
        if self.features.shape[0] < 1:
            raise ValueError("a data shard needs at least one sample")

    @property
    def count(self) -> int:
        return self.features.shape[0]


@dataclass
class Partition:
    client_indices: list[Array]

    def __len__(self) -> int:
        return len(self.client_indices)

    def shards(self, ds: Dataset) -> list[DataShard]:
        return [ds.subset(idx) for idx in self.client_indices]


# --------------------------------------------------------------------------
# synthetic regression data


def synthetic_block_sizes(n: int) -> tuple[int, int, int]:
    third = math.ceil(n / 3)
    return third, third, n - 2 * third


def gen_synthetic(seed: int, n: int, d: int) -> Dataset:
    """Linear-regression data with normal, Student-t and uniform feature blocks.

    Rows come in block order (normal, t(5), uniform on [-5, 5]); shuffling is
    left to the partitioner. Targets follow ``b = a @ w + eps`` with a planted
    ``w ~ N(0, I/d)`` and ``eps ~ N(0, 0.1**2)``.
    """
    if n < 3:
        raise ValueError(f"need at least 3 samples, got {n}")
    if d < 1:
        raise ValueError(f"feature dimension must be positive, got {d}")
    rng = make_rng(seed, STREAM_DATA)
    n_normal, n_t, n_unif = synthetic_block_sizes(n)

    normal = rng.standard_normal((n_normal, d))
    numer = rng.standard_normal((n_t, d))
    chi2 = np.sum(rng.standard_normal((STUDENT_T_DF, n_t, d)) ** 2, axis=0)
    student = numer / np.sqrt(chi2 / STUDENT_T_DF)
    uniform = rng.uniform(-5.0, 5.0, size=(n_unif, d))
    features = np.vstack([normal, student, uniform])

    w_true = rng.standard_normal(d) / math.sqrt(d)
    noise = SYNTHETIC_NOISE_STD * rng.standard_normal(n)
    targets = features @ w_true + noise
    meta = {
        "blocks": [n_normal, n_t, n_unif],
        "w_true": w_true,
        "label_rule": f"b = a.w + eps, w ~ N(0, 1/d), eps ~ N(0, {SYNTHETIC_NOISE_STD}^2)",
    }
    return Dataset(features, targets, "regression", meta)


# --------------------------------------------------------------------------
# IDX files


class MnistFormatError(ValueError):
    """Base class for malformed IDX input; ``path`` names the offending file."""

    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{path}: {message}")


class BadMagicError(MnistFormatError):
    pass


class TruncatedFileError(MnistFormatError):
    pass


class CountMismatchError(MnistFormatError):
    pass


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx(path, expected_magic: int) -> Array:
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise TruncatedFileError(path, "file shorter than the IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise BadMagicError(path, f"bad magic number 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError(path, "file shorter than its dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise TruncatedFileError(path, f"expected {size} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def write_idx(path, data: Array) -> None:
    """Write uint8 data as IDX; a ``.gz`` suffix gzips the output."""
    data = np.ascontiguousarray(data, dtype=np.uint8)
    ndim = data.ndim
    magic = 0x00000800 | ndim
    payload = struct.pack(f">I{ndim}I", magic, *data.shape) + data.tobytes()
    path = Path(path)
    if path.suffix == ".gz":
        payload = gzip.compress(payload, mtime=0)
    path.write_bytes(payload)


def read_idx_pair(images_path, labels_path) -> tuple[Array, Array]:
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            labels_path, f"{labels.shape[0]} labels but {images.shape[0]} images in {images_path}"
        )
    if labels.size and labels.max() > 9:
        raise MnistFormatError(labels_path, f"label {labels.max()} out of range 0-9")
    return images, labels


def _select(images: Array, labels: Array, n: int, rng: np.random.Generator, path) -> Dataset:
    if n > images.shape[0]:
        raise CountMismatchError(path, f"requested {n} samples, file holds {images.shape[0]}")
    order = rng.permutation(images.shape[0])[:n]
    feats = images[order].reshape(n, int(np.prod(images.shape[1:]))).astype(np.float64) / 255.0
    return Dataset(feats, labels[order].astype(np.int64), "classification")


def load_mnist(
    train_images_path,
    train_labels_path,
    test_images_path,
    test_labels_path,
    n_train: int,
    n_test: int,
    seed: int,
) -> tuple[Dataset, Dataset]:
    """Load MNIST-format IDX files (optionally gzipped).

    ``n_train``/``n_test`` samples are taken as the prefix of a seeded shuffle
    of each file; pixels are scaled to [0, 1].
    """
    tr_img, tr_lab = read_idx_pair(train_images_path, train_labels_path)
    te_img, te_lab = read_idx_pair(test_images_path, test_labels_path)
    train = _select(tr_img, tr_lab, n_train, make_rng(seed, STREAM_DATA, 0), train_images_path)
    test = _select(te_img, te_lab, n_test, make_rng(seed, STREAM_DATA, 1), test_images_path)
    return train, test


MNIST_FILENAMES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


def find_mnist_files(directory) -> tuple[Path, Path, Path, Path]:
    """Resolve the four standard MNIST filenames in ``directory`` (plain or .gz)."""
    directory = Path(directory)
    found = []
    for name in MNIST_FILENAMES:
        for candidate in (directory / name, directory / f"{name}.gz"):
            if candidate.exists():
                found.append(candidate)
                break
        else:
            raise FileNotFoundError(f"{directory}: missing {name}[.gz]")
    return tuple(found)


# --------------------------------------------------------------------------
# partitioning


def partition_iid(ds: Dataset, m: int, seed: int) -> Partition:
    """Seeded shuffle, then contiguous splits; the first ``N mod m`` clients get one extra sample."""
    n = len(ds)
    if m < 1:
        raise ValueError(f"need at least one client, got {m}")
    if m > n:
        raise ValueError(f"cannot split {n} samples among {m} clients")
    order = make_rng(seed, STREAM_PARTITION).permutation(n)
    base, extra = divmod(n, m)
    sizes = [base + (1 if i < extra else 0) for i in range(m)]
    bounds = np.cumsum([0] + sizes)
    return Partition([order[bounds[i] : bounds[i + 1]] for i in range(m)])


def partition_label_shards(
    ds: Dataset, m: int, shard_size: int, shards_per_client: int, seed: int
) -> Partition:
    """Pathological non-IID split: sort by label, cut fixed-size shards, deal them out at random."""
    n = len(ds)
    n_shards = m * shards_per_client
    if m < 1 or shard_size < 1 or shards_per_client < 1:
        raise ValueError("clients, shard_size and shards_per_client must be positive")
    if n_shards * shard_size != n:
        raise ValueError(
            f"clients*shards_per_client*shard_size = {m}*{shards_per_client}*{shard_size} "
            f"= {n_shards * shard_size} != {n} samples"
        )
    by_label = np.argsort(ds.targets, kind="stable")
    shards = by_label.reshape(n_shards, shard_size)
    perm = make_rng(seed, STREAM_PARTITION).permutation(n_shards)
    return Partition(
        [shards[perm[i * shards_per_client : (i + 1) * shards_per_client]].ravel() for i in range(m)]
    )
