"""Tests for the cached basis-index tables."""

import threading

import numpy as np
import pytest

from src.core.errors import UsageError
from src.utils.index_tables import BasisIndexTables, bit_mask, get_tables


class TestBitMask:
    def test_qubit_zero_is_most_significant(self):
        assert bit_mask(3, 0) == 0b100
        assert bit_mask(3, 2) == 0b001

    def test_out_of_range_qubit(self):
        with pytest.raises(UsageError):
            bit_mask(2, 2)


class TestTables:
    def test_singleton(self):
        assert get_tables() is BasisIndexTables()

    def test_pairs_for_middle_qubit(self):
        pairs = get_tables().pairs(3, 1)
        np.testing.assert_array_equal(pairs.zero, [0, 1, 0, 1, 4, 5, 4, 5])
        np.testing.assert_array_equal(pairs.one, [2, 3, 2, 3, 6, 7, 6, 7])
        np.testing.assert_array_equal(
            pairs.bit, [False, False, True, True, False, False, True, True]
        )

    def test_cnot_flips_target_when_control_set(self):
        # CNOT(0, 1) on two qubits swaps |10> and |11>
        np.testing.assert_array_equal(get_tables().cnot(2, 0, 1), [0, 1, 3, 2])

    def test_cnot_is_read_only_and_cached(self):
        first = get_tables().cnot(3, 2, 0)
        assert first is get_tables().cnot(3, 2, 0)
        assert not first.flags.writeable

    def test_cnot_rejects_equal_control_and_target(self):
        with pytest.raises(UsageError):
            get_tables().cnot(2, 1, 1)

    def test_marginal_zero_selects_cleared_bits(self):
        table = get_tables().marginal_zero(2, 2)
        np.testing.assert_array_equal(
            table, [[1.0, 1.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]
        )

    def test_marginal_zero_rejects_too_many_classes(self):
        with pytest.raises(UsageError):
            get_tables().marginal_zero(2, 3)

    def test_concurrent_builds_share_one_table(self):
        # Given several threads asking for the same new table
        results = []

        def worker() -> None:
            results.append(get_tables().marginal_zero(5, 3))

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()

        # Then every thread got the same object
        assert all(table is results[0] for table in results)
