"""Cached basis-index tables for statevector kernels.

Qubit 0 is the most significant bit of a basis index:
``bit_q(j) = (j >> (n - 1 - q)) & 1``.
"""

from __future__ import annotations

import threading
from collections.abc import Callable
from dataclasses import dataclass
from typing import Self, TypeVar

import numpy as np
from numpy.typing import NDArray

from src.core.errors import UsageError

IntArray = NDArray[np.intp]
T = TypeVar("T")


@dataclass(frozen=True, slots=True)
class QubitPairs:
    """Gather indices pairing every basis state with its partner on one qubit.

    For amplitude ``j``, ``zero[j]``/``one[j]`` are the indices of the pair
    member with the qubit bit cleared/set, and ``bit[j]`` is the bit of ``j``.
    """

    zero: IntArray
    one: IntArray
    bit: NDArray[np.bool_]


def _check_qubit(n_qubits: int, qubit: int) -> None:
    if not 0 <= qubit < n_qubits:
        msg = f"qubit index {qubit} out of range for {n_qubits} qubits"
        raise UsageError(msg)


def bit_mask(n_qubits: int, qubit: int) -> int:
    _check_qubit(n_qubits, qubit)
    return 1 << (n_qubits - 1 - qubit)


class BasisIndexTables:
    """Process-wide cache of index tables, keyed by qubit count.

    Tables are immutable once built; construction is guarded by a lock so
    concurrent sweep workers share one copy.
    """

    _instance: BasisIndexTables | None = None
    _lock = threading.Lock()

    def __new__(cls) -> Self:
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    instance = super().__new__(cls)
                    instance._cache = {}
                    cls._instance = instance
        return cls._instance  # type: ignore[return-value]

    _cache: dict[tuple[object, ...], object]

    def _cached(self, key: tuple[object, ...], build: Callable[[], T]) -> T:
        if key not in self._cache:
            with self._lock:
                if key not in self._cache:
                    self._cache[key] = build()
        return self._cache[key]  # type: ignore[return-value]

    def pairs(self, n_qubits: int, qubit: int) -> QubitPairs:
        mask = bit_mask(n_qubits, qubit)

        def build() -> QubitPairs:
            index = np.arange(1 << n_qubits, dtype=np.intp)
            bit = (index & mask) != 0
            return QubitPairs(zero=index & ~mask, one=index | mask, bit=bit)

        return self._cached(("pairs", n_qubits, qubit), build)

    def cnot(self, n_qubits: int, control: int, target: int) -> IntArray:
        """Source index per output amplitude for ``CNOT(control, target)``."""
        if control == target:
            msg = f"CNOT control and target must differ, got {control}"
            raise UsageError(msg)
        control_mask = bit_mask(n_qubits, control)
        target_mask = bit_mask(n_qubits, target)

        def build() -> IntArray:
            index = np.arange(1 << n_qubits, dtype=np.intp)
            flipped = np.where(index & control_mask, index ^ target_mask, index)
            flipped.setflags(write=False)
            return flipped

        return self._cached(("cnot", n_qubits, control, target), build)

    def marginal_zero(self, n_qubits: int, n_classes: int) -> NDArray[np.float64]:
        """Selection matrix ``S[j, c] = 1`` where qubit ``c`` of ``j`` is 0."""
        if not 1 <= n_classes <= n_qubits:
            msg = f"n_classes must be in [1, {n_qubits}], got {n_classes}"
            raise UsageError(msg)

        def build() -> NDArray[np.float64]:
            index = np.arange(1 << n_qubits)[:, None]
            shifts = n_qubits - 1 - np.arange(n_classes)[None, :]
            table = (((index >> shifts) & 1) == 0).astype(np.float64)
            table.setflags(write=False)
            return table

        return self._cached(("marginal", n_qubits, n_classes), build)


def get_tables() -> BasisIndexTables:
    return BasisIndexTables()
