"""Adam with decoupled weight decay over a flat parameter vector.

Update order per step:

    theta <- theta * (1 - lr * wd)
    m <- b1 * m + (1 - b1) * g
    v <- b2 * v + (1 - b2) * g**2
    theta <- theta - lr * m_hat / (sqrt(v_hat) + delta)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.core.errors import NumericDomainError, UsageError

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]


@dataclass(slots=True)
class OptimizerState:
    """First/second moment estimates and the number of applied updates."""

    m: Array
    v: Array
    step: int = 0

    @classmethod
    def zeros(cls, size: int) -> OptimizerState:
        return cls(m=np.zeros(size), v=np.zeros(size))


class AdamW:
    """Adam with weight decay applied directly to the parameters."""

    BETA1 = 0.9
    BETA2 = 0.999
    DELTA = 1e-8

    def __init__(self, lr: float = 0.005, weight_decay: float = 0.01) -> None:
        if not (np.isfinite(lr) and lr > 0.0):
            msg = f"learning rate must be positive and finite, got {lr}"
            raise UsageError(msg)
        if not (np.isfinite(weight_decay) and weight_decay >= 0.0):
            msg = f"weight decay must be nonnegative and finite, got {weight_decay}"
            raise UsageError(msg)
        self.lr = lr
        self.weight_decay = weight_decay
        logger.debug("adamw lr=%g weight_decay=%g", lr, weight_decay)

    def step(self, theta: ArrayLike, grad: ArrayLike, state: OptimizerState) -> Array:
        """Return the updated parameters; ``state`` is updated in place."""
        theta = np.asarray(theta, dtype=np.float64)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != theta.shape:
            msg = f"gradient shape {grad.shape} does not match parameters {theta.shape}"
            raise UsageError(msg)
        if not np.all(np.isfinite(grad)):
            msg = "gradient has non-finite entries"
            raise NumericDomainError(msg)

        state.step += 1
        state.m = self.BETA1 * state.m + (1.0 - self.BETA1) * grad
        state.v = self.BETA2 * state.v + (1.0 - self.BETA2) * grad * grad
        m_hat = state.m / (1.0 - self.BETA1**state.step)
        v_hat = state.v / (1.0 - self.BETA2**state.step)

        decayed = theta * (1.0 - self.lr * self.weight_decay)
        return decayed - self.lr * m_hat / (np.sqrt(v_hat) + self.DELTA)
