"""Tests for AdamW."""

import numpy as np
import pytest

from src.core.errors import NumericDomainError, UsageError
from src.core.optimizer import AdamW, OptimizerState


class TestAdamW:
    def test_first_step_moves_by_learning_rate(self):
        # Given fresh moments
        optimizer = AdamW(lr=0.1, weight_decay=0.01)
        state = OptimizerState.zeros(2)

        # When taking one step
        theta = optimizer.step([1.0, -1.0], [0.5, -2.0], state)

        # Then the bias-corrected step is lr * sign(g) after decay
        np.testing.assert_allclose(theta, [0.899, -0.899], atol=1e-6)
        assert state.step == 1

    def test_zero_gradient_only_decays(self):
        optimizer = AdamW(lr=0.1, weight_decay=0.5)
        theta = optimizer.step([2.0], [0.0], OptimizerState.zeros(1))
        np.testing.assert_allclose(theta, [1.9])

    def test_minimises_a_quadratic(self):
        optimizer = AdamW(lr=0.05, weight_decay=0.0)
        state = OptimizerState.zeros(3)
        theta = np.array([0.0, 5.0, -2.0])
        for _ in range(2000):
            theta = optimizer.step(theta, 2.0 * (theta - 3.0), state)
        np.testing.assert_allclose(theta, [3.0, 3.0, 3.0], atol=0.1)

    @pytest.mark.parametrize(
        ("lr", "weight_decay"), [(0.0, 0.0), (float("nan"), 0.0), (0.1, -1.0)]
    )
    def test_invalid_hyperparameters(self, lr, weight_decay):
        with pytest.raises(UsageError):
            AdamW(lr=lr, weight_decay=weight_decay)

    def test_shape_mismatch(self):
        with pytest.raises(UsageError):
            AdamW().step(np.zeros(2), np.zeros(3), OptimizerState.zeros(2))

    def test_non_finite_gradient(self):
        with pytest.raises(NumericDomainError):
            AdamW().step(np.zeros(1), [np.inf], OptimizerState.zeros(1))
