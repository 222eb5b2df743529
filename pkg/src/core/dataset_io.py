"""IDX ingestion and preparation of MNIST-family datasets for amplitude embedding.

Expected layout under the dataset root::

    <root>/<dataset>/train-images-idx3-ubyte[.gz]
    <root>/<dataset>/train-labels-idx1-ubyte[.gz]
    <root>/<dataset>/t10k-images-idx3-ubyte[.gz]
    <root>/<dataset>/t10k-labels-idx1-ubyte[.gz]
"""

from __future__ import annotations

import gzip
import logging
import math
import struct
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.core.errors import IdxParseError, UsageError

logger = logging.getLogger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DATASETS: tuple[str, ...] = ("mnist", "fashion_mnist", "kmnist")
SPLIT_PREFIXES: dict[str, str] = {"train": "train", "test": "t10k"}
RESIZE_CHUNK = 4096

IdxKind = Literal["images", "labels"]


@dataclass(frozen=True, slots=True)
class RawDataset:
    """Pixel grids and labels as stored on disk."""

    images: NDArray[np.uint8]
    labels: NDArray[np.uint8]

    def __post_init__(self) -> None:
        if len(self.images) != len(self.labels):
            msg = (
                f"image count {len(self.images)} does not match "
                f"label count {len(self.labels)}"
            )
            raise UsageError(msg)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True, slots=True)
class PreparedDataset:
    """Unit-norm feature vectors of length ``2**n_qubits`` and labels in [0, C)."""

    features: NDArray[np.float64]
    labels: NDArray[np.intp]
    n_qubits: int
    n_classes: int
    name: str = ""

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices: ArrayLike) -> PreparedDataset:
        index = np.asarray(indices, dtype=np.intp)
        return PreparedDataset(
            self.features[index],
            self.labels[index],
            self.n_qubits,
            self.n_classes,
            self.name,
        )


def parse_idx(data: bytes, kind: IdxKind | None = None) -> NDArray[np.uint8]:
    """Decode a big-endian IDX byte stream of unsigned bytes."""
    if len(data) < 4:  # noqa: PLR2004
        msg = "missing IDX magic number"
        raise IdxParseError(msg, 0)
    (magic,) = struct.unpack_from(">I", data, 0)
    expected_magic = {"images": IMAGE_MAGIC, "labels": LABEL_MAGIC}
    allowed = (expected_magic[kind],) if kind else (IMAGE_MAGIC, LABEL_MAGIC)
    if magic not in allowed:
        msg = f"bad IDX magic 0x{magic:08x}"
        raise IdxParseError(msg, 0)

    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        msg = f"truncated header: {ndim} dimensions need {header_end} bytes"
        raise IdxParseError(msg, len(data))
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    expected = math.prod(dims)
    payload = len(data) - header_end
    if payload < expected:
        msg = f"truncated payload: dims {dims} need {expected} bytes, found {payload}"
        raise IdxParseError(msg, len(data))
    if payload > expected:
        msg = f"{payload - expected} trailing bytes after payload"
        raise IdxParseError(msg, header_end + expected)

    array = np.frombuffer(data, dtype=np.uint8, count=expected, offset=header_end)
    return array.reshape(dims).copy()


def read_idx(path: str | Path, kind: IdxKind | None = None) -> NDArray[np.uint8]:
    """Read an IDX file, transparently decompressing ``.gz``."""
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as handle:
            data = handle.read()
    else:
        data = path.read_bytes()
    return parse_idx(data, kind)


def _locate(directory: Path, stem: str) -> Path:
    candidates = [directory / stem, directory / f"{stem}.gz"]
    for candidate in candidates:
        if candidate.is_file():
            return candidate
    expected = " or ".join(str(candidate) for candidate in candidates)
    msg = f"dataset file not found: expected {expected}"
    raise FileNotFoundError(msg)


def load_raw(root: str | Path, dataset: str, split: str) -> RawDataset:
    """Load one split of a dataset from ``<root>/<dataset>/``."""
    if dataset not in DATASETS:
        msg = f"unknown dataset {dataset!r}; expected one of {', '.join(DATASETS)}"
        raise UsageError(msg)
    if split not in SPLIT_PREFIXES:
        msg = f"unknown split {split!r}; expected train or test"
        raise UsageError(msg)
    directory = Path(root) / dataset
    prefix = SPLIT_PREFIXES[split]
    images = read_idx(_locate(directory, f"{prefix}-images-idx3-ubyte"), "images")
    labels = read_idx(_locate(directory, f"{prefix}-labels-idx1-ubyte"), "labels")
    if len(images) != len(labels):
        msg = f"label count {len(labels)} does not match image count {len(images)}"
        raise IdxParseError(msg, 4)
    logger.info(
        "dataset=%s split=%s images=%d shape=%s",
        dataset,
        split,
        len(images),
        images.shape[1:],
    )
    return RawDataset(images=images, labels=labels)


def _sample_grid(
    size: int, side: int
) -> tuple[NDArray[np.intp], NDArray[np.intp], NDArray[np.float64]]:
    if side == 1:
        coords = np.zeros(1)
    else:
        coords = np.arange(side) * ((size - 1) / (side - 1))
    lower = np.floor(coords).astype(np.intp)
    upper = np.minimum(lower + 1, size - 1)
    return lower, upper, coords - lower


def resize_bilinear(image: ArrayLike, side: int) -> NDArray[np.float64]:
    """Corner-aligned bilinear resize of ``(..., H, W)`` grids to ``side x side``."""
    if side <= 0:
        msg = f"resize side must be positive, got {side}"
        raise UsageError(msg)
    grid = np.asarray(image, dtype=np.float64)
    height, width = grid.shape[-2:]
    y0, y1, wy = _sample_grid(height, side)
    x0, x1, wx = _sample_grid(width, side)
    top = grid[..., y0, :]
    bottom = grid[..., y1, :]
    top_row = (1.0 - wx) * top[..., x0] + wx * top[..., x1]
    bottom_row = (1.0 - wx) * bottom[..., x0] + wx * bottom[..., x1]
    return (1.0 - wy)[:, None] * top_row + wy[:, None] * bottom_row


def normalize_features(pixels: NDArray[np.float64]) -> NDArray[np.float64]:
    """Scale rows to unit L2 norm; an all-zero row becomes the first basis vector."""
    features = np.array(pixels, dtype=np.float64)
    norms = np.linalg.norm(features, axis=-1)
    zero = norms == 0.0
    features[zero] = 0.0
    features[zero, 0] = 1.0
    norms[zero] = 1.0
    return features / norms[:, None]


def prepare(  # noqa: PLR0913
    raw: RawDataset,
    n_qubits: int,
    n_classes: int,
    seed: int,
    limit: int | None = None,
    name: str = "",
) -> PreparedDataset:
    """Filter, resize, flatten, normalize and shuffle a raw split."""
    if n_qubits < 2 or n_qubits % 2:  # noqa: PLR2004
        msg = f"n_qubits must be even and at least 2, got {n_qubits}"
        raise UsageError(msg)
    if not 1 <= n_classes <= n_qubits:
        msg = f"n_classes must be in [1, {n_qubits}], got {n_classes}"
        raise UsageError(msg)

    keep = np.flatnonzero(raw.labels < n_classes)
    if keep.size == 0:
        msg = f"no samples with label < {n_classes}"
        raise UsageError(msg)

    side = 1 << (n_qubits // 2)
    pixels = np.empty((keep.size, side * side))
    for start in range(0, keep.size, RESIZE_CHUNK):
        chunk = keep[start : start + RESIZE_CHUNK]
        resized = resize_bilinear(raw.images[chunk], side)
        pixels[start : start + len(chunk)] = resized.reshape(len(chunk), -1) / 255.0

    features = normalize_features(pixels)
    labels = raw.labels[keep].astype(np.intp)
    order = np.random.default_rng(seed).permutation(keep.size)
    if limit is not None:
        order = order[:limit]
    logger.info(
        "prepared samples=%d features=%d classes=%d", order.size, side * side, n_classes
    )
    return PreparedDataset(
        features=features[order],
        labels=labels[order],
        n_qubits=n_qubits,
        n_classes=n_classes,
        name=name,
    )


def batches(
    size: int, batch_size: int, order: ArrayLike | None = None
) -> Iterator[NDArray[np.intp]]:
    """Index arrays of at most ``batch_size`` entries following ``order``."""
    if batch_size < 1:
        msg = f"batch size must be positive, got {batch_size}"
        raise UsageError(msg)
    index = np.arange(size) if order is None else np.asarray(order, dtype=np.intp)
    for start in range(0, len(index), batch_size):
        yield index[start : start + batch_size]
