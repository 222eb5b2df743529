"""Reverse-mode differentiation over numpy arrays.

Propagation kernels call the module-level functions below (``add``, ``maximum``,
``cos``, ...). When no operand is a :class:`Tracked` value they return plain
numpy results, so one kernel source serves both the untracked evaluation path
and the recorded path used for gradients.

Subgradient conventions:
    * ``maximum``/``minimum`` route the gradient to the first operand on ties.
    * ``amax`` routes to the first maximal index.
    * ``abs`` has gradient 0 at 0.
"""

from __future__ import annotations

import hashlib
import logging
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.core.errors import NumericDomainError, UsageError

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]
Vjp = Callable[[Array], Array]


@dataclass(slots=True)
class Node:
    """One recorded operation: its parents and their local reverse rules."""

    op: str
    parents: tuple[int, ...]
    vjps: tuple[Vjp, ...]
    shape: tuple[int, ...]


class Tape:
    """Append-only operation record; append order is a topological order."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.inputs: dict[str, int] = {}
        self.min_tie_gap: float = math.inf
        self._branches = hashlib.sha256()

    def __len__(self) -> int:
        return len(self.nodes)

    def variable(self, value: ArrayLike, name: str) -> Tracked:
        """Register an input and return its tracked handle."""
        if name in self.inputs:
            msg = f"input {name!r} is already registered on this tape"
            raise UsageError(msg)
        tracked = self.push("input", np.array(value, dtype=np.float64), (), ())
        self.inputs[name] = tracked.index
        return tracked

    def push(
        self,
        op: str,
        value: ArrayLike,
        operands: Sequence[Any],
        vjps: Sequence[Vjp],
    ) -> Tracked:
        """Append a node whose tracked operands receive ``vjps`` on backward."""
        array = np.asarray(value, dtype=np.float64)
        index = len(self.nodes)
        if not np.all(np.isfinite(array)):
            msg = f"non-finite value produced by {op} at node {index}"
            raise NumericDomainError(msg, node=index, op=op)

        parents: list[int] = []
        funcs: list[Vjp] = []
        for operand, vjp in zip(operands, vjps, strict=True):
            if isinstance(operand, Tracked):
                parents.append(operand.index)
                funcs.append(_shaped(vjp, operand.shape))
        self.nodes.append(Node(op, tuple(parents), tuple(funcs), array.shape))
        return Tracked(array, self, index)

    def note_branch(self, selection: ArrayLike) -> None:
        """Fold a data-dependent selection into the branch signature."""
        self._branches.update(np.ascontiguousarray(selection).tobytes())

    def note_gap(self, gap: ArrayLike) -> None:
        """Track the smallest nonzero distance between selection operands."""
        gap = np.asarray(gap)
        positive = gap[(gap > 0) & np.isfinite(gap)]
        if positive.size:
            self.min_tie_gap = min(self.min_tie_gap, float(positive.min()))

    def branch_signature(self) -> str:
        """Digest of every selection made while recording."""
        return self._branches.copy().hexdigest()


class Tracked:
    """A numpy value recorded on a :class:`Tape`."""

    __slots__ = ("index", "tape", "value")
    # Make ndarray operators defer to the reflected methods below.
    __array_ufunc__ = None

    def __init__(self, value: Array, tape: Tape, index: int) -> None:
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"Tracked(node={self.index}, value={self.value!r})"

    def __add__(self, other: Any) -> Tracked:
        return add(self, other)  # type: ignore[return-value]

    def __radd__(self, other: Any) -> Tracked:
        return add(other, self)  # type: ignore[return-value]

    def __sub__(self, other: Any) -> Tracked:
        return sub(self, other)  # type: ignore[return-value]

    def __rsub__(self, other: Any) -> Tracked:
        return sub(other, self)  # type: ignore[return-value]

    def __mul__(self, other: Any) -> Tracked:
        return mul(self, other)  # type: ignore[return-value]

    def __rmul__(self, other: Any) -> Tracked:
        return mul(other, self)  # type: ignore[return-value]

    def __neg__(self) -> Tracked:
        return neg(self)  # type: ignore[return-value]

    def __getitem__(self, key: int | ArrayLike) -> Tracked:
        return take(self, key, axis=0)  # type: ignore[return-value]


Value = Array | Tracked | float


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _shaped(vjp: Vjp, shape: tuple[int, ...]) -> Vjp:
    return lambda grad: _unbroadcast(vjp(grad), shape)


def value_of(x: Any) -> Any:
    """Return the plain numpy value of a possibly tracked operand."""
    return x.value if isinstance(x, Tracked) else x


def is_tracked(*xs: Any) -> bool:
    return any(isinstance(x, Tracked) for x in xs)


def _tape(*operands: Any) -> Tape | None:
    tape: Tape | None = None
    for operand in operands:
        if isinstance(operand, Tracked):
            if tape is not None and operand.tape is not tape:
                msg = "operands were recorded on different tapes"
                raise UsageError(msg)
            tape = operand.tape
    return tape


def _identity(grad: Array) -> Array:
    return grad


def _negate(grad: Array) -> Array:
    return -grad


def add(a: Any, b: Any) -> Any:
    out = np.add(value_of(a), value_of(b))
    tape = _tape(a, b)
    if tape is None:
        return out
    return tape.push("add", out, (a, b), (_identity, _identity))


def sub(a: Any, b: Any) -> Any:
    out = np.subtract(value_of(a), value_of(b))
    tape = _tape(a, b)
    if tape is None:
        return out
    return tape.push("sub", out, (a, b), (_identity, _negate))


def mul(a: Any, b: Any) -> Any:
    va, vb = value_of(a), value_of(b)
    out = np.multiply(va, vb)
    tape = _tape(a, b)
    if tape is None:
        return out
    return tape.push("mul", out, (a, b), (lambda g: g * vb, lambda g: g * va))


def neg(a: Any) -> Any:
    out = np.negative(value_of(a))
    tape = _tape(a)
    if tape is None:
        return out
    return tape.push("neg", out, (a,), (_negate,))


def maximum(a: Any, b: Any) -> Any:
    va, vb = value_of(a), value_of(b)
    out = np.maximum(va, vb)
    tape = _tape(a, b)
    if tape is None:
        return out
    pick_a = np.greater_equal(va, vb)
    tape.note_branch(pick_a)
    tape.note_gap(np.abs(np.subtract(va, vb)))
    return tape.push(
        "maximum",
        out,
        (a, b),
        (lambda g: g * pick_a, lambda g: g * np.logical_not(pick_a)),
    )


def minimum(a: Any, b: Any) -> Any:
    va, vb = value_of(a), value_of(b)
    out = np.minimum(va, vb)
    tape = _tape(a, b)
    if tape is None:
        return out
    pick_a = np.less_equal(va, vb)
    tape.note_branch(pick_a)
    tape.note_gap(np.abs(np.subtract(va, vb)))
    return tape.push(
        "minimum",
        out,
        (a, b),
        (lambda g: g * pick_a, lambda g: g * np.logical_not(pick_a)),
    )


def absolute(a: Any) -> Any:
    va = value_of(a)
    out = np.abs(va)
    tape = _tape(a)
    if tape is None:
        return out
    sign = np.sign(va)
    tape.note_branch(sign.astype(np.int8))
    tape.note_gap(out)
    return tape.push("abs", out, (a,), (lambda g: g * sign,))


def square(a: Any) -> Any:
    va = value_of(a)
    out = np.square(va)
    tape = _tape(a)
    if tape is None:
        return out
    return tape.push("square", out, (a,), (lambda g: 2.0 * g * va,))


def cos(a: Any) -> Any:
    va = value_of(a)
    out = np.cos(va)
    tape = _tape(a)
    if tape is None:
        return out
    return tape.push("cos", out, (a,), (lambda g: -g * np.sin(va),))


def sin(a: Any) -> Any:
    va = value_of(a)
    out = np.sin(va)
    tape = _tape(a)
    if tape is None:
        return out
    return tape.push("sin", out, (a,), (lambda g: g * np.cos(va),))


def exp(a: Any) -> Any:
    va = value_of(a)
    with np.errstate(over="ignore"):
        out = np.exp(va)
    tape = _tape(a)
    if tape is None:
        return out
    return tape.push("exp", out, (a,), (lambda g: g * out,))


def log(a: Any) -> Any:
    va = value_of(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(va)
    tape = _tape(a)
    if tape is None:
        return out
    return tape.push("log", out, (a,), (lambda g: g / va,))


def where(condition: ArrayLike, a: Any, b: Any, *, branch: bool = True) -> Any:
    """Select elementwise with a constant mask.

    ``branch`` marks masks computed from data, which take part in the
    branch signature; structural masks (basis bits) pass ``branch=False``.
    """
    cond = np.asarray(condition, dtype=bool)
    out = np.where(cond, value_of(a), value_of(b))
    tape = _tape(a, b)
    if tape is None:
        return out
    if branch:
        tape.note_branch(cond)
    return tape.push(
        "where", out, (a, b), (lambda g: g * cond, lambda g: g * np.logical_not(cond))
    )


def reduce_sum(a: Any, axis: int | None = None) -> Any:
    va = value_of(a)
    out = np.sum(va, axis=axis)
    tape = _tape(a)
    if tape is None:
        return out
    shape = np.shape(va)

    def vjp(grad: Array) -> Array:
        if axis is not None:
            grad = np.expand_dims(grad, axis)
        return np.broadcast_to(grad, shape)

    return tape.push("sum", out, (a,), (vjp,))


def mean(a: Any, axis: int | None = None) -> Any:
    count = np.size(value_of(a)) if axis is None else np.shape(value_of(a))[axis]
    return mul(reduce_sum(a, axis=axis), 1.0 / count)


def amax(a: Any, axis: int = -1, mask: ArrayLike | None = None) -> Any:
    """Maximum along ``axis`` over entries where ``mask`` is true.

    Ties resolve to the first maximal index.
    """
    va = np.asarray(value_of(a), dtype=np.float64)
    eligible = va if mask is None else np.where(mask, va, -np.inf)
    winner = np.expand_dims(np.argmax(eligible, axis=axis), axis)
    out = np.take_along_axis(va, winner, axis=axis).squeeze(axis)
    tape = _tape(a)
    if tape is None:
        return out
    tape.note_branch(winner)
    if eligible.shape[axis] > 1:
        top = -np.partition(-eligible, 1, axis=axis)
        gap = np.take(top, 0, axis=axis) - np.take(top, 1, axis=axis)
        tape.note_gap(gap)
    shape = va.shape

    def vjp(grad: Array) -> Array:
        full = np.zeros(shape)
        np.put_along_axis(full, winner, np.expand_dims(grad, axis), axis=axis)
        return full

    return tape.push("amax", out, (a,), (vjp,))


def take(a: Any, indices: int | ArrayLike, axis: int = 0) -> Any:
    """Gather along ``axis`` (scalar or one-dimensional indices)."""
    va = value_of(a)
    out = np.take(va, indices, axis=axis)
    tape = _tape(a)
    if tape is None:
        return out
    shape = np.shape(va)
    scalar_index = np.ndim(indices) == 0

    def vjp(grad: Array) -> Array:
        full = np.zeros(shape)
        target = np.moveaxis(full, axis, 0)
        source = grad if scalar_index else np.moveaxis(grad, axis, 0)
        np.add.at(target, indices, source)
        return full

    return tape.push("take", out, (a,), (vjp,))


def expand_dims(a: Any, axis: int) -> Any:
    va = value_of(a)
    out = np.expand_dims(va, axis)
    tape = _tape(a)
    if tape is None:
        return out
    shape = np.shape(va)
    return tape.push("expand_dims", out, (a,), (lambda g: np.reshape(g, shape),))


def pad_last(a: Any, extra: int) -> Any:
    """Append ``extra`` zeros along the last axis."""
    va = value_of(a)
    if extra <= 0:
        return a
    width = [(0, 0)] * (np.ndim(va) - 1) + [(0, extra)]
    out = np.pad(va, width)
    tape = _tape(a)
    if tape is None:
        return out
    size = np.shape(va)[-1]
    return tape.push("pad", out, (a,), (lambda g: g[..., :size],))


def einsum_const(subscripts: str, a: Any, const: ArrayLike) -> Any:
    """``np.einsum(subscripts, a, const)`` with ``const`` untracked.

    Every index of ``a`` must appear in the output or in ``const``.
    """
    matrix = np.asarray(const, dtype=np.float64)
    out = np.einsum(subscripts, value_of(a), matrix)
    tape = _tape(a)
    if tape is None:
        return out
    inputs, output = subscripts.replace(" ", "").split("->")
    a_sub, c_sub = inputs.split(",")
    back = f"{output},{c_sub}->{a_sub}"
    return tape.push(
        "einsum", out, (a,), (lambda g: np.einsum(back, g, matrix),)
    )


@dataclass(slots=True)
class Gradients:
    """Reverse-accumulated gradients keyed by registered input name."""

    values: dict[str, Array]
    visited: int
    vjp_calls: int

    def __getitem__(self, name: str) -> Array:
        return self.values[name]


def backward(tape: Tape, seed: Tracked) -> Gradients:
    """Reverse sweep from the scalar ``seed``; each node is visited once."""
    if seed.tape is not tape:
        msg = "seed was not recorded on this tape"
        raise UsageError(msg)
    if seed.value.size != 1:
        msg = f"backward needs a scalar seed, got shape {seed.shape}"
        raise UsageError(msg)

    input_nodes = set(tape.inputs.values())
    adjoints: list[Array | None] = [None] * (seed.index + 1)
    adjoints[seed.index] = np.ones_like(seed.value)
    visited = 0
    vjp_calls = 0
    for index in range(seed.index, -1, -1):
        visited += 1
        grad = adjoints[index]
        if grad is None:
            continue
        node = tape.nodes[index]
        for parent, vjp in zip(node.parents, node.vjps, strict=True):
            contribution = vjp(grad)
            vjp_calls += 1
            current = adjoints[parent]
            adjoints[parent] = (
                contribution if current is None else current + contribution
            )
        if index not in input_nodes:
            adjoints[index] = None

    values: dict[str, Array] = {}
    for name, index in tape.inputs.items():
        grad = adjoints[index] if index <= seed.index else None
        shape = tape.nodes[index].shape
        values[name] = np.zeros(shape) if grad is None else np.array(grad)
    return Gradients(values=values, visited=visited, vjp_calls=vjp_calls)


@dataclass(slots=True)
class Recording:
    """Result of running a program on a fresh tape."""

    value: Array
    output: Any
    tape: Tape


def record(fn: Callable[..., Any], inputs: Mapping[str, ArrayLike]) -> Recording:
    """Run ``fn(**inputs)`` with every input registered on a new tape."""
    tape = Tape()
    tracked = {name: tape.variable(value, name) for name, value in inputs.items()}
    output = fn(**tracked)
    return Recording(value=np.asarray(value_of(output)), output=output, tape=tape)


def gradient(
    fn: Callable[..., Any], inputs: Mapping[str, ArrayLike]
) -> tuple[float, dict[str, Array]]:
    """Value and gradients of a scalar-valued ``fn`` at ``inputs``."""
    recording = record(fn, inputs)
    if recording.value.size != 1:
        msg = f"gradient needs a scalar output, got shape {recording.value.shape}"
        raise UsageError(msg)
    value = float(recording.value.reshape(()))
    if not isinstance(recording.output, Tracked):
        return value, {
            name: np.zeros(np.shape(array)) for name, array in inputs.items()
        }
    grads = backward(recording.tape, recording.output)
    return value, grads.values


@dataclass(slots=True)
class GradCheckReport:
    """Outcome of comparing reverse-mode gradients with central differences."""

    max_rel_error: float
    passed: bool
    checked: int
    point_near_tie: bool = False
    skipped: list[tuple[str, int]] = field(default_factory=list)


def grad_check(  # noqa: PLR0913
    fn: Callable[..., Any],
    point: Mapping[str, ArrayLike],
    tolerance: float = 1e-4,
    step: float = 1e-5,
    tie_threshold: float = 1e-6,
    wrt: Sequence[str] | None = None,
) -> GradCheckReport:
    """Compare ``gradient(fn, point)`` against central finite differences.

    Coordinates whose +/- step changes any recorded selection are skipped and
    listed in ``skipped``; a point whose closest selection tie is nearer than
    ``tie_threshold`` is excluded as a whole (``point_near_tie``).
    """
    base = {name: np.array(value, dtype=np.float64) for name, value in point.items()}
    recording = record(fn, base)
    if 0.0 < recording.tape.min_tie_gap < tie_threshold:
        logger.info("grad_check point within %.1e of a tie; excluded", tie_threshold)
        return GradCheckReport(
            max_rel_error=0.0, passed=True, checked=0, point_near_tie=True
        )
    signature = recording.tape.branch_signature()
    _, analytic = gradient(fn, base)

    names = list(wrt) if wrt is not None else list(base)
    worst = 0.0
    checked = 0
    skipped: list[tuple[str, int]] = []
    for name in names:
        flat = base[name].reshape(-1)
        for i in range(flat.size):
            values: list[float] = []
            crossed = False
            for direction in (1.0, -1.0):
                shifted = {key: array.copy() for key, array in base.items()}
                shifted[name].reshape(-1)[i] += direction * step
                probe = record(fn, shifted)
                crossed |= probe.tape.branch_signature() != signature
                values.append(float(probe.value.reshape(())))
            if crossed:
                skipped.append((name, i))
                continue
            numeric = (values[0] - values[1]) / (2.0 * step)
            exact = float(analytic[name].reshape(-1)[i])
            error = abs(exact - numeric) / max(abs(exact), 1e-8)
            worst = max(worst, error)
            checked += 1

    if skipped:
        logger.info("grad_check skipped %d tie-adjacent coordinates", len(skipped))
    return GradCheckReport(
        max_rel_error=worst,
        passed=worst <= tolerance,
        checked=checked,
        skipped=skipped,
    )
