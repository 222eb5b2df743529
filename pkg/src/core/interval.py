"""Real and complex interval arithmetic.

Bounds are computed in round-to-nearest double precision ("floating-point
sound"); soundness checks in tests pad with :data:`SOUNDNESS_SLACK`.

Endpoints may be floats, numpy arrays or tracked arrays, so one interval can
hold a whole batch of scalar intervals. Every operation below is elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.core import autodiff as ad
from src.core.errors import NumericDomainError, UsageError

SOUNDNESS_SLACK = 1e-12

ArithOp = Literal["add", "sub", "scale"]


@dataclass(frozen=True, slots=True)
class Interval:
    """Closed interval ``[lo, hi]`` with ``lo <= hi``."""

    lo: Any
    hi: Any

    def __post_init__(self) -> None:
        lo = np.asarray(ad.value_of(self.lo))
        hi = np.asarray(ad.value_of(self.hi))
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            msg = "interval bound is not finite"
            raise NumericDomainError(msg)
        if np.any(lo > hi):
            msg = "interval lower bound exceeds upper bound"
            raise UsageError(msg)

    @classmethod
    def point(cls, value: Any) -> Interval:
        return cls(value, value)

    @property
    def shape(self) -> tuple[int, ...]:
        return np.shape(ad.value_of(self.lo))

    def bounds(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Untracked ``(lo, hi)`` arrays."""
        return (
            np.asarray(ad.value_of(self.lo), dtype=np.float64),
            np.asarray(ad.value_of(self.hi), dtype=np.float64),
        )

    def __getitem__(self, index: int) -> Interval:
        """Select along the last axis (a class or an amplitude)."""
        return Interval(
            ad.take(self.lo, index, axis=-1), ad.take(self.hi, index, axis=-1)
        )


@dataclass(frozen=True, slots=True)
class ComplexInterval:
    """Box ``re x im`` in the complex plane."""

    re: Interval
    im: Interval

    @classmethod
    def point(cls, re: Any, im: Any = 0.0) -> ComplexInterval:
        return cls(Interval.point(re), Interval.point(im))


def iv_add(a: Interval, b: Interval) -> Interval:
    return Interval(ad.add(a.lo, b.lo), ad.add(a.hi, b.hi))


def iv_sub(a: Interval, b: Interval) -> Interval:
    return Interval(ad.sub(a.lo, b.hi), ad.sub(a.hi, b.lo))


def iv_scale(a: Interval, c: Any) -> Interval:
    """Multiply by a point constant ``c`` (scalar, array or tracked).

    Splitting ``c`` into positive and negative parts keeps the result exact
    for degenerate intervals and lets ``c`` vary elementwise.
    """
    c_pos = ad.maximum(c, 0.0)
    c_neg = ad.minimum(c, 0.0)
    lo = ad.add(ad.mul(c_pos, a.lo), ad.mul(c_neg, a.hi))
    hi = ad.add(ad.mul(c_pos, a.hi), ad.mul(c_neg, a.lo))
    return Interval(lo, hi)


def iv_shift(a: Interval, c: Any) -> Interval:
    return Interval(ad.add(a.lo, c), ad.add(a.hi, c))


def iv_arith(a: Interval, b: Interval | float, op: ArithOp) -> Interval:
    """Endpoint arithmetic for ``add``, ``sub`` or ``scale`` (``b`` a constant)."""
    if op == "scale":
        if isinstance(b, Interval):
            msg = "scale takes a real constant, not an interval"
            raise UsageError(msg)
        if not np.all(np.isfinite(ad.value_of(b))):
            msg = "scale constant is not finite"
            raise NumericDomainError(msg)
        return iv_scale(a, b)
    if not isinstance(b, Interval):
        msg = f"{op} takes two intervals"
        raise UsageError(msg)
    if op == "add":
        return iv_add(a, b)
    if op == "sub":
        return iv_sub(a, b)
    msg = f"unknown interval operation {op!r}"
    raise UsageError(msg)


def iv_mul(a: Interval, b: Interval) -> Interval:
    products = (
        ad.mul(a.lo, b.lo),
        ad.mul(a.lo, b.hi),
        ad.mul(a.hi, b.lo),
        ad.mul(a.hi, b.hi),
    )
    lo, hi = products[0], products[0]
    for product in products[1:]:
        lo = ad.minimum(lo, product)
        hi = ad.maximum(hi, product)
    return Interval(lo, hi)


def iv_square(a: Interval) -> Interval:
    """Dependency-aware square; never looser than ``iv_mul(a, a)``."""
    lo_sq = ad.square(a.lo)
    hi_sq = ad.square(a.hi)
    lo, hi = a.bounds()
    straddles = (lo <= 0.0) & (hi >= 0.0)
    lower = ad.where(straddles, 0.0, ad.minimum(lo_sq, hi_sq))
    return Interval(lower, ad.maximum(lo_sq, hi_sq))


def civ_add(a: ComplexInterval, b: ComplexInterval) -> ComplexInterval:
    return ComplexInterval(iv_add(a.re, b.re), iv_add(a.im, b.im))


def civ_mul(a: ComplexInterval, b: ComplexInterval) -> ComplexInterval:
    re = iv_sub(iv_mul(a.re, b.re), iv_mul(a.im, b.im))
    im = iv_add(iv_mul(a.re, b.im), iv_mul(a.im, b.re))
    return ComplexInterval(re, im)


def iv_width(a: Interval) -> NDArray[np.float64]:
    lo, hi = a.bounds()
    return hi - lo


def iv_contains(
    a: Interval, x: ArrayLike, slack: float = SOUNDNESS_SLACK
) -> NDArray[np.bool_]:
    lo, hi = a.bounds()
    x = np.asarray(x, dtype=np.float64)
    return (lo - slack <= x) & (x <= hi + slack)
