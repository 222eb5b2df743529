"""Pytest configuration: environment defaults and shared fixtures."""

import gzip
import importlib
import os
import struct
from pathlib import Path

import numpy as np
import pytest

# Environment defaults must exist before any module imports src.config.
# setdefault() keeps values the caller exported (for example a real data root).
_DEFAULT_ENV = {
    "VQC_DATA_ROOT": "data",
    "VQC_OUTPUT_DIR": "runs",
    "VQC_SEED": "1234",
    "VQC_MAX_WORKERS": "1",
    "VQC_LOG_LEVEL": "WARNING",
    "VQC_EVAL_BATCH": "64",
}

for key, value in _DEFAULT_ENV.items():
    os.environ.setdefault(key, value)

import src.config as cfg  # noqa: E402
from src.core.circuit import CircuitSpec  # noqa: E402
from src.core.dataset_io import PreparedDataset, normalize_features  # noqa: E402


@pytest.fixture(autouse=True)
def reset_config_module():
    """Ensure src.config reflects current env between tests."""
    yield
    importlib.reload(cfg)


def idx_bytes(array: np.ndarray) -> bytes:
    """Encode a uint8 array as an IDX byte stream."""
    magic = 0x0800 | array.ndim
    header = struct.pack(f">I{array.ndim}I", magic, *array.shape)
    return header + np.ascontiguousarray(array, dtype=np.uint8).tobytes()


def write_idx_dataset(  # noqa: PLR0913
    root: Path,
    name: str,
    split: str,
    images: np.ndarray,
    labels: np.ndarray,
    *,
    compress: bool = False,
) -> None:
    prefix = "train" if split == "train" else "t10k"
    directory = root / name
    directory.mkdir(parents=True, exist_ok=True)
    for stem, array in (
        (f"{prefix}-images-idx3-ubyte", images),
        (f"{prefix}-labels-idx1-ubyte", labels),
    ):
        data = idx_bytes(array)
        if compress:
            with gzip.open(directory / f"{stem}.gz", "wb") as handle:
                handle.write(data)
        else:
            (directory / stem).write_bytes(data)


def synthetic_digits(count: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """28x28 images whose bright half encodes the label (0: top, 1: bottom)."""
    rng = np.random.default_rng(seed)
    labels = (np.arange(count) % 2).astype(np.uint8)
    images = rng.integers(0, 30, size=(count, 28, 28)).astype(np.uint8)
    images[labels == 0, :14, :] += 200
    images[labels == 1, 14:, :] += 200
    return images, labels


@pytest.fixture
def toy_spec() -> CircuitSpec:
    return CircuitSpec(n_qubits=2, n_layers=2, n_classes=2)


@pytest.fixture
def toy_dataset() -> PreparedDataset:
    """Two clusters that zero angles already separate.

    With all angles zero the two layers only permute the basis: |11> ends at
    |01> (class 0 wins) and |01> ends at |10> (class 1 wins).
    """
    rng = np.random.default_rng(7)
    count = 32
    labels = np.arange(count) % 2
    base = np.zeros((count, 4))
    base[labels == 0, 3] = 1.0
    base[labels == 1, 1] = 1.0
    noisy = np.abs(base + 0.05 * rng.standard_normal((count, 4)))
    return PreparedDataset(
        features=normalize_features(noisy),
        labels=labels.astype(np.intp),
        n_qubits=2,
        n_classes=2,
        name="toy",
    )


@pytest.fixture
def idx_root(tmp_path: Path) -> Path:
    """A dataset root with small synthetic mnist train/test splits."""
    train_images, train_labels = synthetic_digits(48, seed=1)
    test_images, test_labels = synthetic_digits(16, seed=2)
    write_idx_dataset(tmp_path, "mnist", "train", train_images, train_labels)
    write_idx_dataset(tmp_path, "mnist", "test", test_images, test_labels)
    return tmp_path
