"""Circuit description and exact statevector simulation.

Layer and measurement kernels are written once against :class:`AmplitudeAlgebra`
and instantiated with point arrays here (:class:`ExactAlgebra`) and with
interval or affine values in :mod:`src.core.propagation`. All three run the
same products in the same order, so at zero perturbation the bounds collapse
onto the exact values.

Basis convention: qubit 0 is the most significant bit of the basis index.
Class ``c`` reads the Pauli-Z expectation of qubit ``c``.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, Generic, Protocol, TypeVar

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.core import autodiff as ad
from src.core.errors import UsageError
from src.utils.index_tables import get_tables

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-9

V = TypeVar("V")


class RotationKind(StrEnum):
    RY = "RY"
    RX = "RX"
    RZ = "RZ"


def default_ring(n_qubits: int) -> tuple[tuple[int, int], ...]:
    """CNOT(i, i+1) for i = 0..n-2, then CNOT(n-1, 0); empty for one qubit."""
    if n_qubits < 2:  # noqa: PLR2004
        return ()
    chain = tuple((i, i + 1) for i in range(n_qubits - 1))
    return (*chain, (n_qubits - 1, 0))


@dataclass(frozen=True, slots=True)
class CircuitSpec:
    """Architecture of the classifier circuit."""

    n_qubits: int
    n_layers: int
    n_classes: int
    rotation_kind: RotationKind = RotationKind.RY
    entangler: tuple[tuple[int, int], ...] | None = field(default=None)

    def __post_init__(self) -> None:
        if self.n_qubits < 1:
            msg = f"n_qubits must be at least 1, got {self.n_qubits}"
            raise UsageError(msg)
        if self.n_layers < 1:
            msg = f"n_layers must be at least 1, got {self.n_layers}"
            raise UsageError(msg)
        if not 1 <= self.n_classes <= self.n_qubits:
            msg = f"n_classes must be in [1, {self.n_qubits}], got {self.n_classes}"
            raise UsageError(msg)
        try:
            kind = RotationKind(str(self.rotation_kind).upper())
        except ValueError as exc:
            msg = f"unknown rotation kind {self.rotation_kind!r}"
            raise UsageError(msg) from exc
        object.__setattr__(self, "rotation_kind", kind)

        pairs = (
            default_ring(self.n_qubits)
            if self.entangler is None
            else tuple((int(c), int(t)) for c, t in self.entangler)
        )
        for control, target in pairs:
            in_range = 0 <= control < self.n_qubits and 0 <= target < self.n_qubits
            if not in_range or control == target:
                msg = f"invalid CNOT({control}, {target}) for {self.n_qubits} qubits"
                raise UsageError(msg)
        object.__setattr__(self, "entangler", pairs)

    @property
    def n_amplitudes(self) -> int:
        return 1 << self.n_qubits

    @property
    def n_params(self) -> int:
        return self.n_qubits * self.n_layers

    def param_index(self, layer: int, qubit: int) -> int:
        return layer * self.n_qubits + qubit

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_qubits": self.n_qubits,
            "n_layers": self.n_layers,
            "n_classes": self.n_classes,
            "rotation_kind": str(self.rotation_kind),
            "entangler": [list(pair) for pair in self.entangler or ()],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CircuitSpec:
        entangler = data.get("entangler")
        return cls(
            n_qubits=int(data["n_qubits"]),
            n_layers=int(data["n_layers"]),
            n_classes=int(data["n_classes"]),
            rotation_kind=RotationKind(data.get("rotation_kind", "RY")),
            entangler=None if entangler is None else tuple(map(tuple, entangler)),
        )


@dataclass(frozen=True, slots=True)
class ParamVector:
    """Trainable angles, flat, indexed ``layer * n_qubits + qubit``."""

    theta: NDArray[np.float64]

    def __post_init__(self) -> None:
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(theta)):
            msg = "parameter vector has non-finite entries"
            raise UsageError(msg)
        object.__setattr__(self, "theta", theta)

    def check(self, spec: CircuitSpec) -> None:
        if self.theta.size != spec.n_params:
            msg = f"expected {spec.n_params} parameters, got {self.theta.size}"
            raise UsageError(msg)


def init_params(spec: CircuitSpec, rng: np.random.Generator | int) -> ParamVector:
    """Angles drawn uniformly from (-pi, pi)."""
    generator = np.random.default_rng(rng)
    return ParamVector(generator.uniform(-math.pi, math.pi, size=spec.n_params))


@dataclass(frozen=True, slots=True)
class GateMatrix:
    """Single-qubit gate as real and imaginary entry tuples ``(u00, u01, u10, u11)``.

    ``im`` is ``None`` for real gates. Entries may be tracked scalars.
    """

    re: tuple[Any, Any, Any, Any]
    im: tuple[Any, Any, Any, Any] | None = None

    def as_array(self) -> NDArray[np.complex128]:
        re = np.array([ad.value_of(x) for x in self.re], dtype=np.float64)
        im = (
            np.zeros(4)
            if self.im is None
            else np.array([ad.value_of(x) for x in self.im], dtype=np.float64)
        )
        return (re + 1j * im).reshape(2, 2)


@dataclass(frozen=True, slots=True)
class Cnot:
    control: int
    target: int


def rotation_matrix(kind: RotationKind | str, theta: Any) -> GateMatrix:
    try:
        kind = RotationKind(str(kind).upper())
    except ValueError as exc:
        msg = f"unknown rotation kind {kind!r}"
        raise UsageError(msg) from exc
    half = ad.mul(theta, 0.5)
    c, s = ad.cos(half), ad.sin(half)
    if kind is RotationKind.RY:
        return GateMatrix(re=(c, ad.neg(s), s, c))
    if kind is RotationKind.RX:
        minus_s = ad.neg(s)
        return GateMatrix(re=(c, 0.0, 0.0, c), im=(0.0, minus_s, minus_s, 0.0))
    return GateMatrix(re=(c, 0.0, 0.0, c), im=(ad.neg(s), 0.0, 0.0, s))


class AmplitudeAlgebra(Protocol[V]):
    """Value operations a statevector kernel needs; the amplitude axis is last."""

    def take(self, value: V, indices: ArrayLike) -> V: ...

    def scale(self, value: V, factor: Any) -> V: ...

    def add(self, a: V, b: V) -> V: ...

    def shift(self, value: V, offset: float) -> V: ...

    def square(self, value: V) -> V: ...

    def contract(self, value: V, matrix: NDArray[np.float64]) -> V: ...


class ExactAlgebra:
    """Point arithmetic on (optionally tracked) numpy arrays."""

    def take(self, value: Any, indices: ArrayLike) -> Any:
        return ad.take(value, indices, axis=-1)

    def scale(self, value: Any, factor: Any) -> Any:
        return ad.mul(value, factor)

    def add(self, a: Any, b: Any) -> Any:
        return ad.add(a, b)

    def shift(self, value: Any, offset: float) -> Any:
        return ad.add(value, offset)

    def square(self, value: Any) -> Any:
        return ad.square(value)

    def contract(self, value: Any, matrix: NDArray[np.float64]) -> Any:
        return ad.einsum_const("...j,jc->...c", value, matrix)


EXACT = ExactAlgebra()


@dataclass(frozen=True, slots=True)
class Amplitudes(Generic[V]):
    """Real and imaginary parts of a state; ``im is None`` means identically 0."""

    re: V
    im: V | None = None


def _sum_terms(alg: AmplitudeAlgebra[V], terms: list[V]) -> V:
    total = terms[0]
    for term in terms[1:]:
        total = alg.add(total, term)
    return total


def apply_rotation(
    alg: AmplitudeAlgebra[V],
    state: Amplitudes[V],
    gate: GateMatrix,
    n_qubits: int,
    qubit: int,
) -> Amplitudes[V]:
    """Apply a single-qubit gate by gathering each amplitude's pair partner.

    ``out[j] = c0[j] * v[zero[j]] + c1[j] * v[one[j]]`` where ``c0, c1`` are the
    gate row selected by the qubit bit of ``j``.
    """
    pairs = get_tables().pairs(n_qubits, qubit)
    u00, u01, u10, u11 = gate.re
    c0_re = ad.where(pairs.bit, u10, u00, branch=False)
    c1_re = ad.where(pairs.bit, u11, u01, branch=False)
    re0, re1 = alg.take(state.re, pairs.zero), alg.take(state.re, pairs.one)

    re_terms = [alg.scale(re0, c0_re), alg.scale(re1, c1_re)]
    im_terms: list[V] = []
    if state.im is not None:
        im0, im1 = alg.take(state.im, pairs.zero), alg.take(state.im, pairs.one)
        im_terms += [alg.scale(im0, c0_re), alg.scale(im1, c1_re)]
    if gate.im is not None:
        v00, v01, v10, v11 = gate.im
        c0_im = ad.where(pairs.bit, v10, v00, branch=False)
        c1_im = ad.where(pairs.bit, v11, v01, branch=False)
        if state.im is not None:
            re_terms += [
                alg.scale(im0, ad.neg(c0_im)),
                alg.scale(im1, ad.neg(c1_im)),
            ]
        im_terms += [alg.scale(re0, c0_im), alg.scale(re1, c1_im)]

    im = _sum_terms(alg, im_terms) if im_terms else None
    return Amplitudes(_sum_terms(alg, re_terms), im)


def apply_permutation(
    alg: AmplitudeAlgebra[V], state: Amplitudes[V], source: ArrayLike
) -> Amplitudes[V]:
    """Permute amplitudes: ``out[j] = v[source[j]]``."""
    im = None if state.im is None else alg.take(state.im, source)
    return Amplitudes(alg.take(state.re, source), im)


@functools.lru_cache(maxsize=64)
def entangler_permutation(spec: CircuitSpec) -> NDArray[np.intp]:
    """Single gather equivalent to applying the layer's CNOT list in order."""
    tables = get_tables()
    composed = np.arange(spec.n_amplitudes, dtype=np.intp)
    for control, target in spec.entangler or ():
        composed = composed[tables.cnot(spec.n_qubits, control, target)]
    composed.setflags(write=False)
    return composed


def apply_layer(
    alg: AmplitudeAlgebra[V],
    state: Amplitudes[V],
    spec: CircuitSpec,
    theta: Any,
    layer: int,
) -> Amplitudes[V]:
    """Rotations on qubits 0..n-1, then the entangler."""
    if not 0 <= layer < spec.n_layers:
        msg = f"layer index {layer} out of range for {spec.n_layers} layers"
        raise UsageError(msg)
    for qubit in range(spec.n_qubits):
        angle = ad.take(theta, spec.param_index(layer, qubit), axis=0)
        gate = rotation_matrix(spec.rotation_kind, angle)
        state = apply_rotation(alg, state, gate, spec.n_qubits, qubit)
    if spec.entangler:
        state = apply_permutation(alg, state, entangler_permutation(spec))
    return state


def measure_logits(
    alg: AmplitudeAlgebra[V], state: Amplitudes[V], n_qubits: int, n_classes: int
) -> V:
    """``2 * P(q_c = 0) - 1`` per class, summing marginals before the map."""
    probability = alg.square(state.re)
    if state.im is not None:
        probability = alg.add(probability, alg.square(state.im))
    selection = get_tables().marginal_zero(n_qubits, n_classes)
    zero_mass = alg.contract(probability, selection)
    return alg.shift(alg.scale(zero_mass, 2.0), -1.0)


@dataclass(frozen=True, slots=True)
class StateVector:
    """Exact statevector; ``im is None`` for a real state."""

    re: Any
    im: Any = None

    @property
    def n_qubits(self) -> int:
        size = np.shape(ad.value_of(self.re))[-1]
        n_qubits = size.bit_length() - 1
        if size < 1 or 1 << n_qubits != size:
            msg = f"statevector length {size} is not a power of two"
            raise UsageError(msg)
        return n_qubits

    def to_complex(self) -> NDArray[np.complex128]:
        re = np.asarray(ad.value_of(self.re), dtype=np.float64)
        if self.im is None:
            return re.astype(np.complex128)
        return re + 1j * np.asarray(ad.value_of(self.im), dtype=np.float64)

    def norm(self) -> NDArray[np.float64]:
        return np.linalg.norm(self.to_complex(), axis=-1)


def embed_exact(features: Any) -> StateVector:
    """Amplitude embedding of real features (no normalization check)."""
    return StateVector(re=features)


def apply_gate_exact(
    state: StateVector, gate: GateMatrix | Cnot, qubit: int | None = None
) -> StateVector:
    n_qubits = state.n_qubits
    amplitudes = Amplitudes(state.re, state.im)
    if isinstance(gate, Cnot):
        source = get_tables().cnot(n_qubits, gate.control, gate.target)
        result = apply_permutation(EXACT, amplitudes, source)
    else:
        if qubit is None:
            msg = "single-qubit gates need a qubit index"
            raise UsageError(msg)
        result = apply_rotation(EXACT, amplitudes, gate, n_qubits, qubit)
    return StateVector(result.re, result.im)


def run_exact(spec: CircuitSpec, theta: Any, features: Any) -> StateVector:
    """Final statevector after all layers."""
    state: Amplitudes[Any] = Amplitudes(features)
    for layer in range(spec.n_layers):
        state = apply_layer(EXACT, state, spec, theta, layer)
    return StateVector(state.re, state.im)


def _theta_of(params: ParamVector | Any) -> Any:
    return params.theta if isinstance(params, ParamVector) else params


def exact_logits(spec: CircuitSpec, params: ParamVector | Any, features: Any) -> Any:
    """Logits for one sample ``(N,)`` or a batch ``(B, N)``; features may be
    off the unit sphere (perturbed inputs)."""
    theta = _theta_of(params)
    if np.shape(ad.value_of(theta)) != (spec.n_params,):
        msg = f"expected {spec.n_params} parameters, got {np.shape(ad.value_of(theta))}"
        raise UsageError(msg)
    if np.shape(ad.value_of(features))[-1] != spec.n_amplitudes:
        msg = (
            f"expected {spec.n_amplitudes} features, "
            f"got {np.shape(ad.value_of(features))[-1]}"
        )
        raise UsageError(msg)
    final = run_exact(spec, theta, features)
    return measure_logits(
        EXACT, Amplitudes(final.re, final.im), spec.n_qubits, spec.n_classes
    )


def check_unit_norm(features: ArrayLike) -> None:
    norms = np.linalg.norm(np.asarray(ad.value_of(features)), axis=-1)
    drift = float(np.max(np.abs(norms - 1.0), initial=0.0))
    if drift > NORM_TOLERANCE:
        msg = f"features must have unit L2 norm (off by {drift:.3e})"
        raise UsageError(msg)


def forward_exact(spec: CircuitSpec, params: ParamVector | Any, features: Any) -> Any:
    check_unit_norm(features)
    return exact_logits(spec, params, features)
