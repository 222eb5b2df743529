"""Bound propagation of an L-infinity input perturbation through the circuit.

Two arithmetics share the circuit kernels of :mod:`src.core.circuit`:

* interval: every amplitude is a box ``re x im`` of intervals;
* affine: every amplitude is a pair of affine forms over one noise symbol per
  input feature, so correlations between amplitudes survive the linear layers.

The perturbation is applied to the normalized feature vector and the box is
not renormalized, so it over-approximates the set of valid perturbed states.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.core import autodiff as ad
from src.core.affine import (
    AffineForm,
    ComplexAffine,
    NoiseSymbolSpace,
    af_add,
    af_contract,
    af_scale,
    af_shift,
    af_square_chebyshev,
    af_take,
    af_to_interval,
)
from src.core.circuit import (
    Amplitudes,
    CircuitSpec,
    ParamVector,
    apply_layer,
    apply_permutation,
    check_unit_norm,
    measure_logits,
)
from src.core.errors import UsageError
from src.core.interval import (
    ComplexInterval,
    Interval,
    iv_add,
    iv_scale,
    iv_shift,
    iv_square,
)

logger = logging.getLogger(__name__)

# Coefficient entries per affine micro-batch.
AFFINE_ELEMENT_BUDGET = 1 << 21


class Arithmetic(StrEnum):
    INTERVAL = "interval"
    AFFINE = "affine"


class IntervalAlgebra:
    """Interval instantiation of the circuit kernels."""

    def take(self, value: Interval, indices: ArrayLike) -> Interval:
        return Interval(
            ad.take(value.lo, indices, axis=-1), ad.take(value.hi, indices, axis=-1)
        )

    def scale(self, value: Interval, factor: Any) -> Interval:
        return iv_scale(value, factor)

    def add(self, a: Interval, b: Interval) -> Interval:
        return iv_add(a, b)

    def shift(self, value: Interval, offset: float) -> Interval:
        return iv_shift(value, offset)

    def square(self, value: Interval) -> Interval:
        return iv_square(value)

    def contract(self, value: Interval, matrix: NDArray[np.float64]) -> Interval:
        if np.any(matrix < 0.0):
            msg = "interval contraction needs a nonnegative matrix"
            raise UsageError(msg)
        return Interval(
            ad.einsum_const("...j,jc->...c", value.lo, matrix),
            ad.einsum_const("...j,jc->...c", value.hi, matrix),
        )


class AffineAlgebra:
    """Affine instantiation of the circuit kernels."""

    def take(self, value: AffineForm, indices: ArrayLike) -> AffineForm:
        return af_take(value, indices)

    def scale(self, value: AffineForm, factor: Any) -> AffineForm:
        return af_scale(value, factor)

    def add(self, a: AffineForm, b: AffineForm) -> AffineForm:
        return af_add(a, b)

    def shift(self, value: AffineForm, offset: float) -> AffineForm:
        return af_shift(value, offset)

    def square(self, value: AffineForm) -> AffineForm:
        return af_square_chebyshev(value)

    def contract(self, value: AffineForm, matrix: NDArray[np.float64]) -> AffineForm:
        return af_contract(value, matrix)


INTERVAL_ALGEBRA = IntervalAlgebra()
AFFINE_ALGEBRA = AffineAlgebra()


@dataclass(frozen=True, slots=True)
class IntervalState:
    """Interval amplitudes; ``im is None`` means every imaginary part is [0, 0]."""

    re: Interval
    im: Interval | None = None

    @property
    def amplitudes(self) -> ComplexInterval:
        if self.im is None:
            zeros = np.zeros(self.re.shape)
            return ComplexInterval(self.re, Interval.point(zeros))
        return ComplexInterval(self.re, self.im)

    @property
    def n_qubits(self) -> int:
        return int(self.re.shape[-1]).bit_length() - 1

    def as_amplitudes(self) -> Amplitudes[Interval]:
        return Amplitudes(self.re, self.im)


@dataclass(frozen=True, slots=True)
class AffineState:
    """Affine amplitudes over one shared symbol space."""

    re: AffineForm
    im: AffineForm | None
    space: NoiseSymbolSpace

    @property
    def amplitudes(self) -> ComplexAffine:
        if self.im is None:
            zeros = np.zeros(np.shape(ad.value_of(self.re.center)))
            return ComplexAffine(
                self.re,
                AffineForm(zeros, np.zeros((*zeros.shape, 0)), zeros, self.space),
            )
        return ComplexAffine(self.re, self.im)

    @property
    def n_qubits(self) -> int:
        return int(np.shape(ad.value_of(self.re.center))[-1]).bit_length() - 1

    def as_amplitudes(self) -> Amplitudes[AffineForm]:
        return Amplitudes(self.re, self.im)


@dataclass(frozen=True, slots=True)
class BoundedLogits:
    """Per-class logit intervals, shape ``(C,)`` or ``(B, C)``."""

    bounds: Interval

    @property
    def lo(self) -> Any:
        return self.bounds.lo

    @property
    def hi(self) -> Any:
        return self.bounds.hi

    @property
    def n_classes(self) -> int:
        return int(self.bounds.shape[-1])

    def __getitem__(self, index: int) -> Interval:
        return self.bounds[index]

    def arrays(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        return self.bounds.bounds()


def _check_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not np.isfinite(epsilon) or epsilon < 0.0:
        msg = f"epsilon must be a finite nonnegative number, got {epsilon}"
        raise UsageError(msg)
    return epsilon


def embed_interval(
    features: ArrayLike, epsilon: float, *, perturb_imag: bool = False
) -> IntervalState:
    """Box ``[x - eps, x + eps]`` around each real amplitude."""
    epsilon = _check_epsilon(epsilon)
    x = np.asarray(features, dtype=np.float64)
    check_unit_norm(x)
    re = Interval(x - epsilon, x + epsilon)
    if not perturb_imag:
        return IntervalState(re)
    radius = np.full(x.shape, epsilon)
    return IntervalState(re, Interval(-radius, radius))


def embed_affine(
    features: ArrayLike, epsilon: float, *, perturb_imag: bool = False
) -> AffineState:
    """Symbol ``j`` carries ``+-eps`` on the real part of amplitude ``j``.

    With ``perturb_imag`` a second, independent block of symbols carries the
    imaginary perturbation.
    """
    epsilon = _check_epsilon(epsilon)
    x = np.asarray(features, dtype=np.float64)
    check_unit_norm(x)
    size = x.shape[-1]
    space = NoiseSymbolSpace()
    space.fresh(size)
    diagonal = np.broadcast_to(np.eye(size) * epsilon, (*x.shape, size))
    zeros = np.zeros(x.shape)
    re = AffineForm(x, diagonal, zeros, space)
    if not perturb_imag:
        return AffineState(re, None, space)
    space.fresh(size)
    im_coeffs = np.concatenate([np.zeros_like(diagonal), diagonal], axis=-1)
    return AffineState(re, AffineForm(zeros, im_coeffs, zeros, space), space)


def propagate_interval_layer(
    state: IntervalState, spec: CircuitSpec, params: ParamVector | Any, layer: int
) -> IntervalState:
    theta = params.theta if isinstance(params, ParamVector) else params
    out = apply_layer(INTERVAL_ALGEBRA, state.as_amplitudes(), spec, theta, layer)
    return IntervalState(out.re, out.im)


def propagate_affine_layer(
    state: AffineState, spec: CircuitSpec, params: ParamVector | Any, layer: int
) -> AffineState:
    theta = params.theta if isinstance(params, ParamVector) else params
    out = apply_layer(AFFINE_ALGEBRA, state.as_amplitudes(), spec, theta, layer)
    return AffineState(out.re, out.im, state.space)


def permute_state(
    state: IntervalState | AffineState, source: ArrayLike
) -> IntervalState | AffineState:
    """Apply a basis permutation (for example one CNOT) to a bound state."""
    if isinstance(state, IntervalState):
        out = apply_permutation(INTERVAL_ALGEBRA, state.as_amplitudes(), source)
        return IntervalState(out.re, out.im)
    moved = apply_permutation(AFFINE_ALGEBRA, state.as_amplitudes(), source)
    return AffineState(moved.re, moved.im, state.space)


def measure_bounds(
    state: IntervalState | AffineState, n_classes: int
) -> BoundedLogits:
    """Logit bounds ``2 * P(q_c = 0) - 1`` for the first ``n_classes`` qubits."""
    n_qubits = state.n_qubits
    if isinstance(state, IntervalState):
        logits = measure_logits(
            INTERVAL_ALGEBRA, state.as_amplitudes(), n_qubits, n_classes
        )
        return BoundedLogits(logits)
    form = measure_logits(AFFINE_ALGEBRA, state.as_amplitudes(), n_qubits, n_classes)
    return BoundedLogits(af_to_interval(form))


def propagate_bounds(  # noqa: PLR0913
    spec: CircuitSpec,
    params: ParamVector | Any,
    features: ArrayLike,
    epsilon: float,
    arithmetic: Arithmetic | str = Arithmetic.INTERVAL,
    *,
    perturb_imag: bool = False,
) -> BoundedLogits:
    """Embed, run every layer and measure in the chosen arithmetic."""
    try:
        arithmetic = Arithmetic(arithmetic)
    except ValueError as exc:
        msg = f"unknown arithmetic {arithmetic!r}"
        raise UsageError(msg) from exc
    x = np.asarray(features, dtype=np.float64)
    if x.shape[-1] != spec.n_amplitudes:
        msg = f"expected {spec.n_amplitudes} features, got {x.shape[-1]}"
        raise UsageError(msg)

    state: IntervalState | AffineState
    if arithmetic is Arithmetic.INTERVAL:
        state = embed_interval(x, epsilon, perturb_imag=perturb_imag)
        for layer in range(spec.n_layers):
            state = propagate_interval_layer(state, spec, params, layer)
    else:
        state = embed_affine(x, epsilon, perturb_imag=perturb_imag)
        for layer in range(spec.n_layers):
            state = propagate_affine_layer(state, spec, params, layer)
    return measure_bounds(state, spec.n_classes)


def certify_sample(bounds: BoundedLogits, true_class: int) -> bool:
    """True iff the true-class lower bound strictly beats every other upper bound."""
    lo, hi = bounds.arrays()
    if lo.ndim != 1:
        msg = "certify_sample takes the bounds of a single sample"
        raise UsageError(msg)
    if not 0 <= true_class < lo.size:
        msg = f"true_class {true_class} out of range for {lo.size} classes"
        raise UsageError(msg)
    others = np.delete(hi, true_class)
    if others.size == 0:
        return True
    return bool(lo[true_class] > others.max())


def certify_batch(bounds: BoundedLogits, labels: ArrayLike) -> NDArray[np.bool_]:
    """Vectorised :func:`certify_sample` over a ``(B, C)`` batch."""
    lo, hi = bounds.arrays()
    labels = np.asarray(labels, dtype=np.intp)
    lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
    if lo.shape[-1] == 1:
        return np.ones(lo.shape[0], dtype=bool)
    rows = np.arange(lo.shape[0])
    true_lower = lo[rows, labels]
    others = hi.copy()
    others[rows, labels] = -np.inf
    return true_lower > others.max(axis=-1)


def affine_batch_limit(
    spec: CircuitSpec,
    *,
    perturb_imag: bool = False,
    budget: int = AFFINE_ELEMENT_BUDGET,
) -> int:
    """Largest batch whose affine coefficient arrays stay within ``budget`` entries."""
    symbols = spec.n_amplitudes * (2 if perturb_imag else 1)
    return max(1, budget // (spec.n_amplitudes * symbols))


def chunk_size(
    spec: CircuitSpec,
    arithmetic: Arithmetic | str,
    batch_size: int,
    *,
    perturb_imag: bool = False,
) -> int:
    """Batch size for bound propagation, capped for affine memory use."""
    if Arithmetic(arithmetic) is Arithmetic.INTERVAL:
        return batch_size
    return min(batch_size, affine_batch_limit(spec, perturb_imag=perturb_imag))
