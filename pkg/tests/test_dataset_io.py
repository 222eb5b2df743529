"""Tests for IDX parsing and dataset preparation."""

import struct

import numpy as np
import pytest

from src.core.dataset_io import (
    RawDataset,
    batches,
    load_raw,
    normalize_features,
    parse_idx,
    prepare,
    read_idx,
    resize_bilinear,
)
from src.core.errors import IdxParseError, UsageError
from tests.conftest import idx_bytes, synthetic_digits, write_idx_dataset


class TestParseIdx:
    def test_images(self):
        images = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
        np.testing.assert_array_equal(parse_idx(idx_bytes(images), "images"), images)

    def test_labels(self):
        labels = np.array([3, 1, 4], dtype=np.uint8)
        np.testing.assert_array_equal(parse_idx(idx_bytes(labels), "labels"), labels)

    def test_missing_magic(self):
        with pytest.raises(IdxParseError) as exc_info:
            parse_idx(b"\x00\x00")
        assert exc_info.value.offset == 0

    def test_wrong_kind_magic(self):
        labels = idx_bytes(np.zeros(2, dtype=np.uint8))
        with pytest.raises(IdxParseError) as exc_info:
            parse_idx(labels, "images")
        assert exc_info.value.offset == 0

    def test_truncated_header(self):
        data = struct.pack(">II", 0x803, 2)
        with pytest.raises(IdxParseError) as exc_info:
            parse_idx(data)
        assert exc_info.value.offset == len(data)

    def test_truncated_payload(self):
        data = idx_bytes(np.zeros((2, 2, 2), dtype=np.uint8))[:-1]
        with pytest.raises(IdxParseError) as exc_info:
            parse_idx(data)
        assert exc_info.value.offset == len(data)

    def test_trailing_bytes(self):
        data = idx_bytes(np.zeros(3, dtype=np.uint8)) + b"\x00\x00"
        with pytest.raises(IdxParseError) as exc_info:
            parse_idx(data)
        # header (8 bytes) + payload (3 bytes)
        assert exc_info.value.offset == 11

    def test_gzip_file(self, tmp_path):
        images, labels = synthetic_digits(4)
        write_idx_dataset(tmp_path, "kmnist", "test", images, labels, compress=True)
        path = tmp_path / "kmnist" / "t10k-images-idx3-ubyte.gz"
        np.testing.assert_array_equal(read_idx(path, "images"), images)


class TestLoadRaw:
    def test_loads_both_files(self, idx_root):
        raw = load_raw(idx_root, "mnist", "train")
        assert raw.images.shape == (48, 28, 28)
        assert len(raw) == 48

    def test_missing_file_names_expected_paths(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="t10k-images-idx3-ubyte"):
            load_raw(tmp_path, "mnist", "test")

    def test_unknown_dataset_and_split(self, idx_root):
        with pytest.raises(UsageError):
            load_raw(idx_root, "cifar", "train")
        with pytest.raises(UsageError):
            load_raw(idx_root, "mnist", "valid")

    def test_count_mismatch(self, tmp_path):
        images, labels = synthetic_digits(4)
        write_idx_dataset(tmp_path, "mnist", "train", images, labels[:3])
        with pytest.raises(IdxParseError):
            load_raw(tmp_path, "mnist", "train")


class TestResize:
    def test_corners_are_kept(self):
        image = np.arange(16, dtype=np.float64).reshape(4, 4)
        resized = resize_bilinear(image, 2)
        np.testing.assert_allclose(resized, [[0.0, 3.0], [12.0, 15.0]])

    def test_upsampling_interpolates(self):
        image = np.array([[0.0, 2.0], [4.0, 6.0]])
        resized = resize_bilinear(image, 3)
        np.testing.assert_allclose(
            resized, [[0.0, 1.0, 2.0], [2.0, 3.0, 4.0], [4.0, 5.0, 6.0]]
        )

    def test_constant_image_stays_constant(self):
        resized = resize_bilinear(np.full((2, 28, 28), 7.0), 32)
        assert resized.shape == (2, 32, 32)
        np.testing.assert_allclose(resized, 7.0)

    def test_invalid_side(self):
        with pytest.raises(UsageError):
            resize_bilinear(np.zeros((4, 4)), 0)


class TestPrepare:
    def test_unit_norm_features_and_filtered_labels(self):
        images, labels = synthetic_digits(10)
        labels[:4] = [0, 1, 2, 3]
        raw = RawDataset(images, labels)
        prepared = prepare(raw, n_qubits=4, n_classes=2, seed=0)
        assert prepared.features.shape[1] == 16
        np.testing.assert_allclose(np.linalg.norm(prepared.features, axis=1), 1.0)
        assert set(prepared.labels.tolist()) <= {0, 1}
        assert len(prepared) == int(np.sum(labels < 2))

    def test_shuffle_is_seeded_and_limit_applies(self):
        raw = RawDataset(*synthetic_digits(20))
        first = prepare(raw, 2, 2, seed=5, limit=7)
        second = prepare(raw, 2, 2, seed=5, limit=7)
        assert len(first) == 7
        np.testing.assert_array_equal(first.features, second.features)

    def test_blank_image_becomes_first_basis_vector(self):
        features = normalize_features(np.zeros((1, 4)))
        np.testing.assert_array_equal(features, [[1.0, 0.0, 0.0, 0.0]])

    @pytest.mark.parametrize(("n_qubits", "n_classes"), [(3, 2), (0, 1), (4, 5)])
    def test_invalid_shapes(self, n_qubits, n_classes):
        with pytest.raises(UsageError):
            prepare(RawDataset(*synthetic_digits(4)), n_qubits, n_classes, seed=0)

    def test_no_matching_labels(self):
        images, labels = synthetic_digits(4)
        raw = RawDataset(images, np.full(4, 9, dtype=np.uint8))
        with pytest.raises(UsageError):
            prepare(raw, 2, 2, seed=0)

    def test_subset(self, toy_dataset):
        subset = toy_dataset.subset([0, 2])
        assert len(subset) == 2
        assert subset.name == "toy"


class TestBatches:
    def test_follows_order_and_keeps_remainder(self):
        chunks = list(batches(5, 2, order=[4, 3, 2, 1, 0]))
        assert [c.tolist() for c in chunks] == [[4, 3], [2, 1], [0]]

    def test_invalid_batch_size(self):
        with pytest.raises(UsageError):
            list(batches(5, 0))
