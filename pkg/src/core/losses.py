"""Clean and bound-aware training losses.

All functions accept a batch axis (logits ``(B, C)``, labels ``(B,)``) and
return per-sample values; the trainer averages them.
"""

from __future__ import annotations

from enum import StrEnum
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.core import autodiff as ad
from src.core.errors import UsageError
from src.core.propagation import BoundedLogits

DEFAULT_GAMMA = 0.2


class LossKind(StrEnum):
    COMBINED_CE = "combined_ce"
    MARGIN = "margin"


def _one_hot(labels: ArrayLike, n_classes: int) -> NDArray[np.bool_]:
    labels = np.asarray(labels, dtype=np.intp)
    if np.any((labels < 0) | (labels >= n_classes)):
        msg = f"labels must lie in [0, {n_classes})"
        raise UsageError(msg)
    return labels[..., None] == np.arange(n_classes)


def _pick(values: Any, one_hot: NDArray[np.bool_]) -> Any:
    """Entry of each row selected by its one-hot mask."""
    return ad.reduce_sum(ad.where(one_hot, values, 0.0, branch=False), axis=-1)


def _n_classes(logits: Any) -> int:
    n_classes = int(np.shape(ad.value_of(logits))[-1])
    if n_classes < 2:  # noqa: PLR2004
        msg = "cross-entropy needs at least two classes"
        raise UsageError(msg)
    return n_classes


def cross_entropy(logits: Any, labels: ArrayLike) -> Any:
    """Softmax cross-entropy with a log-sum-exp shifted by the row maximum.

    The shift is taken as a constant; the loss value does not depend on it.
    """
    one_hot = _one_hot(labels, _n_classes(logits))
    shift = np.max(np.asarray(ad.value_of(logits)), axis=-1, keepdims=True)
    shifted = ad.sub(logits, shift)
    log_normalizer = ad.log(ad.reduce_sum(ad.exp(shifted), axis=-1))
    return ad.sub(log_normalizer, _pick(shifted, one_hot))


def worst_case_logits(bounds: BoundedLogits, labels: ArrayLike) -> Any:
    """Lower bound for the true class, upper bounds for every other class."""
    one_hot = _one_hot(labels, bounds.n_classes)
    return ad.where(one_hot, bounds.lo, bounds.hi, branch=False)


def certified_margin(bounds: BoundedLogits, labels: ArrayLike) -> Any:
    """``lo[y] - max_{j != y} hi[j]`` per sample."""
    one_hot = _one_hot(labels, _n_classes(bounds.lo))
    true_lower = _pick(bounds.lo, one_hot)
    best_other = ad.amax(bounds.hi, axis=-1, mask=np.logical_not(one_hot))
    return ad.sub(true_lower, best_other)


def margin_hinge(bounds: BoundedLogits, labels: ArrayLike, gamma: float) -> Any:
    """``max(0, gamma - margin)``; zero once the margin reaches ``gamma``."""
    return ad.maximum(0.0, ad.sub(gamma, certified_margin(bounds, labels)))


def loss(  # noqa: PLR0913
    bounds: BoundedLogits | None,
    exact_logits: Any,
    labels: ArrayLike,
    kappa: float,
    loss_kind: LossKind | str = LossKind.COMBINED_CE,
    gamma: float = DEFAULT_GAMMA,
) -> Any:
    """``kappa * CE(exact) + (1 - kappa) * robust`` per sample.

    At ``kappa == 1`` the robust term is skipped (``bounds`` may be ``None``),
    so the value is exactly the clean cross-entropy.
    """
    if not 0.0 <= kappa <= 1.0:
        msg = f"kappa must lie in [0, 1], got {kappa}"
        raise UsageError(msg)
    try:
        loss_kind = LossKind(loss_kind)
    except ValueError as exc:
        msg = f"unknown loss kind {loss_kind!r}"
        raise UsageError(msg) from exc

    clean = cross_entropy(exact_logits, labels)
    if kappa == 1.0:
        return clean
    if bounds is None:
        msg = "the robust term needs logit bounds when kappa < 1"
        raise UsageError(msg)
    if loss_kind is LossKind.COMBINED_CE:
        robust = cross_entropy(worst_case_logits(bounds, labels), labels)
    else:
        robust = margin_hinge(bounds, labels, gamma)
    return ad.add(ad.mul(kappa, clean), ad.mul(1.0 - kappa, robust))
