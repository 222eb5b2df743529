"""Affine forms ``x0 + sum_i x_i eps_i`` with a nonnegative residual ``r``.

Coefficients are stored densely on a trailing axis indexed by noise symbol.
Symbols come from a shared :class:`NoiseSymbolSpace`; forms created before
further symbols were allocated are zero-padded when combined.

Nonlinear operations (products, squares) fold all higher-order terms into the
residual, which is symbol-free and therefore never cancels.
"""

from __future__ import annotations

import threading
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.core import autodiff as ad
from src.core.errors import NumericDomainError, UsageError
from src.core.interval import Interval


class NoiseSymbolSpace:
    """Allocator of noise symbol indices for one propagation run."""

    def __init__(self, count: int = 0) -> None:
        if count < 0:
            msg = f"symbol count must be nonnegative, got {count}"
            raise UsageError(msg)
        self._count = count
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        return self._count

    def fresh(self, k: int = 1) -> range:
        """Reserve ``k`` new symbols and return their indices."""
        with self._lock:
            start = self._count
            self._count += k
        return range(start, start + k)

    def __repr__(self) -> str:
        return f"NoiseSymbolSpace(count={self._count})"


@dataclass(frozen=True, slots=True)
class AffineForm:
    """Batched affine form.

    Attributes:
        center: Central values, shape ``S``.
        coeffs: Symbol coefficients, shape ``S + (K,)`` with ``K <= space.count``.
        residual: Nonnegative residual radius, shape ``S``.
        space: Symbol space the coefficients index into.
    """

    center: Any
    coeffs: Any
    residual: Any
    space: NoiseSymbolSpace

    def __post_init__(self) -> None:
        residual = np.asarray(ad.value_of(self.residual))
        if np.any(residual < 0.0):
            msg = "affine residual must be nonnegative"
            raise UsageError(msg)
        width = np.shape(ad.value_of(self.coeffs))[-1]
        if width > self.space.count:
            msg = (
                f"form has {width} coefficients but the space holds "
                f"{self.space.count}"
            )
            raise UsageError(msg)

    @property
    def n_terms(self) -> int:
        return int(np.shape(ad.value_of(self.coeffs))[-1])


@dataclass(frozen=True, slots=True)
class ComplexAffine:
    re: AffineForm
    im: AffineForm


def _check_space(a: AffineForm, b: AffineForm) -> None:
    if a.space is not b.space:
        msg = "affine forms belong to different noise symbol spaces"
        raise UsageError(msg)


def _padded(a: AffineForm, width: int) -> Any:
    return ad.pad_last(a.coeffs, width - a.n_terms)


def af_constant(value: ArrayLike, space: NoiseSymbolSpace) -> AffineForm:
    """Exact scalar(s) with no symbol dependence."""
    center = np.asarray(value, dtype=np.float64)
    return AffineForm(
        center=center,
        coeffs=np.zeros((*center.shape, space.count)),
        residual=np.zeros(center.shape),
        space=space,
    )


def af_from_terms(
    center: float,
    terms: Mapping[int, float],
    space: NoiseSymbolSpace,
    residual: float = 0.0,
) -> AffineForm:
    """Build a scalar form from a sparse ``{symbol: coefficient}`` map."""
    coeffs = np.zeros(space.count)
    for symbol, value in terms.items():
        if not 0 <= symbol < space.count:
            msg = f"symbol {symbol} is not allocated in {space!r}"
            raise UsageError(msg)
        coeffs[symbol] = value
    return AffineForm(np.float64(center), coeffs, np.float64(residual), space)


def af_add(a: AffineForm, b: AffineForm) -> AffineForm:
    _check_space(a, b)
    width = max(a.n_terms, b.n_terms)
    return AffineForm(
        center=ad.add(a.center, b.center),
        coeffs=ad.add(_padded(a, width), _padded(b, width)),
        residual=ad.add(a.residual, b.residual),
        space=a.space,
    )


def af_sub(a: AffineForm, b: AffineForm) -> AffineForm:
    _check_space(a, b)
    width = max(a.n_terms, b.n_terms)
    return AffineForm(
        center=ad.sub(a.center, b.center),
        coeffs=ad.sub(_padded(a, width), _padded(b, width)),
        residual=ad.add(a.residual, b.residual),
        space=a.space,
    )


def af_scale(a: AffineForm, c: Any) -> AffineForm:
    """Multiply by a point constant; ``c`` broadcasts against the batch shape."""
    column = ad.expand_dims(c, -1) if np.ndim(ad.value_of(c)) else c
    return AffineForm(
        center=ad.mul(c, a.center),
        coeffs=ad.mul(column, a.coeffs),
        residual=ad.mul(ad.absolute(c), a.residual),
        space=a.space,
    )


def af_shift(a: AffineForm, c: Any) -> AffineForm:
    return AffineForm(ad.add(a.center, c), a.coeffs, a.residual, a.space)


def af_linear(
    a: AffineForm,
    b: AffineForm | None = None,
    op: Literal["add", "sub", "scale"] = "add",
    c: Any = 1.0,
) -> AffineForm:
    """Linear combination; exact in the symbols, residuals add in magnitude."""
    if op == "scale":
        if not np.all(np.isfinite(ad.value_of(c))):
            msg = "scale constant is not finite"
            raise NumericDomainError(msg)
        return af_scale(a, c)
    if b is None:
        msg = f"{op} takes two affine forms"
        raise UsageError(msg)
    if op == "add":
        return af_add(a, b)
    if op == "sub":
        return af_sub(a, b)
    msg = f"unknown affine operation {op!r}"
    raise UsageError(msg)


def radius(a: AffineForm) -> Any:
    """``sum_i |x_i| + r``, the half-width of the concretization."""
    return ad.add(ad.reduce_sum(ad.absolute(a.coeffs), axis=-1), a.residual)


def af_to_interval(a: AffineForm) -> Interval:
    rad = radius(a)
    return Interval(ad.sub(a.center, rad), ad.add(a.center, rad))


def af_mul(a: AffineForm, b: AffineForm) -> AffineForm:
    """Product with all second-order terms absorbed into the residual."""
    _check_space(a, b)
    width = max(a.n_terms, b.n_terms)
    a_coeffs, b_coeffs = _padded(a, width), _padded(b, width)
    a0 = ad.expand_dims(a.center, -1)
    b0 = ad.expand_dims(b.center, -1)
    coeffs = ad.add(ad.mul(a0, b_coeffs), ad.mul(b0, a_coeffs))
    residual = ad.add(
        ad.add(
            ad.mul(ad.absolute(a.center), b.residual),
            ad.mul(ad.absolute(b.center), a.residual),
        ),
        ad.mul(radius(a), radius(b)),
    )
    return AffineForm(ad.mul(a.center, b.center), coeffs, residual, a.space)


def chebyshev_square_coefficients(lower: Any, upper: Any) -> tuple[Any, Any, Any]:
    """Minimax line ``alpha * x + beta`` for ``x**2`` on ``[lower, upper]``.

    Returns ``(alpha, beta, max_error)``; the error equioscillates at both
    endpoints and the midpoint.
    """
    alpha = ad.add(lower, upper)
    max_error = ad.mul(ad.square(ad.sub(upper, lower)), 0.125)
    beta = ad.neg(ad.add(ad.mul(lower, upper), max_error))
    return alpha, beta, max_error


def af_square_chebyshev(a: AffineForm) -> AffineForm:
    """Sound square via the Chebyshev linearization over the concretization."""
    bounds = af_to_interval(a)
    alpha, beta, max_error = chebyshev_square_coefficients(bounds.lo, bounds.hi)
    return AffineForm(
        center=ad.add(ad.mul(alpha, a.center), beta),
        coeffs=ad.mul(ad.expand_dims(alpha, -1), a.coeffs),
        residual=ad.add(ad.mul(ad.absolute(alpha), a.residual), max_error),
        space=a.space,
    )


def af_take(a: AffineForm, indices: ArrayLike) -> AffineForm:
    """Gather along the last batch axis (the amplitude axis of a state)."""
    return AffineForm(
        center=ad.take(a.center, indices, axis=-1),
        coeffs=ad.take(a.coeffs, indices, axis=-2),
        residual=ad.take(a.residual, indices, axis=-1),
        space=a.space,
    )


def af_contract(a: AffineForm, matrix: ArrayLike) -> AffineForm:
    """Apply a constant matrix along the last batch axis: ``out_c = sum_j a_j M_jc``.

    Center and coefficients combine exactly; residuals combine with ``|M|``.
    """
    m = np.asarray(matrix, dtype=np.float64)
    return AffineForm(
        center=ad.einsum_const("...j,jc->...c", a.center, m),
        coeffs=ad.einsum_const("...jk,jc->...ck", a.coeffs, m),
        residual=ad.einsum_const("...j,jc->...c", a.residual, np.abs(m)),
        space=a.space,
    )


def af_evaluate(
    a: AffineForm, eps: ArrayLike, delta: ArrayLike = 0.0
) -> NDArray[np.float64]:
    """Value of the form at symbol values ``eps`` plus residual draw ``delta``."""
    coeffs = np.asarray(ad.value_of(a.coeffs), dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)[..., : coeffs.shape[-1]]
    value = np.asarray(ad.value_of(a.center)) + np.einsum(
        "...k,...k->...", coeffs, eps
    )
    return value + np.asarray(delta, dtype=np.float64)
