"""Tests for the training loop and its schedules."""

import numpy as np
import pytest

from src.core import evaluation
from src.core.circuit import CircuitSpec, ParamVector
from src.core.dataset_io import PreparedDataset
from src.core.errors import NumericDomainError, TrainingDivergedError, UsageError
from src.core.trainer import (
    ScheduleState,
    TrainConfig,
    Trainer,
    schedule,
    train,
)
from src.utils.result_writer import HISTORY_COLUMNS, ResultWriter


def _config(**overrides) -> TrainConfig:
    values = {
        "epochs": 4,
        "lr": 0.05,
        "batch_size": 8,
        "target_kappa": 0.5,
        "target_epsilon": 0.01,
        "warmup_epochs": 1,
        "ramp_epochs": 2,
        "seed": 3,
    }
    values.update(overrides)
    return TrainConfig(**values)


class TestSchedule:
    @pytest.fixture
    def cfg(self) -> TrainConfig:
        return TrainConfig(
            epochs=30,
            target_kappa=0.5,
            target_epsilon=0.001,
            warmup_epochs=5,
            ramp_epochs=15,
        )

    def test_warmup_is_clean(self, cfg):
        for epoch in range(5):
            assert schedule(epoch, cfg) == ScheduleState(epoch, 1.0, 0.0)

    def test_ramp_interpolates_linearly(self, cfg):
        state = schedule(12, cfg)
        assert state.kappa == pytest.approx(0.7333333333)
        assert state.epsilon == pytest.approx(0.000533333333)

    def test_ramp_reaches_targets_on_its_last_epoch(self, cfg):
        state = schedule(19, cfg)
        assert state.kappa == pytest.approx(0.5)
        assert state.epsilon == pytest.approx(0.001)

    def test_targets_hold_after_ramp(self, cfg):
        assert schedule(29, cfg) == ScheduleState(29, 0.5, 0.001)

    def test_no_ramp_jumps_to_targets(self):
        cfg = TrainConfig(epochs=3, warmup_epochs=1, ramp_epochs=0)
        assert schedule(1, cfg).kappa == cfg.target_kappa

    @pytest.mark.parametrize("epoch", [-1, 30])
    def test_epoch_out_of_range(self, cfg, epoch):
        with pytest.raises(UsageError):
            schedule(epoch, cfg)


class TestTrainConfig:
    @pytest.mark.parametrize(
        "overrides",
        [
            {"epochs": 0},
            {"batch_size": 0},
            {"warmup_epochs": 3, "ramp_epochs": 2},
            {"target_kappa": 1.5},
            {"target_epsilon": -0.1},
            {"gamma": float("nan")},
            {"loss_kind": "hinge"},
            {"arithmetic": "zonotope"},
        ],
    )
    def test_invalid_values(self, overrides):
        with pytest.raises(UsageError):
            _config(**overrides)


class TestTrainer:
    def test_training_is_deterministic(self, toy_spec, toy_dataset):
        first = train(toy_spec, toy_dataset, _config(), show_progress=False)
        second = train(toy_spec, toy_dataset, _config(), show_progress=False)
        np.testing.assert_array_equal(first.params.theta, second.params.theta)
        assert first.history == second.history

    def test_history_follows_schedule(self, toy_spec, toy_dataset):
        result = train(toy_spec, toy_dataset, _config(), show_progress=False)
        assert [r.epoch for r in result.history] == [0, 1, 2, 3]
        assert result.history[0].kappa == 1.0
        assert result.history[0].epsilon == 0.0
        assert result.history[-1].epsilon == pytest.approx(0.01)
        for record in result.history:
            assert 0.0 <= record.clean_acc <= 1.0
            assert 0.0 <= record.cert_frac <= 1.0

    def test_history_csv_has_one_row_per_epoch(self, toy_spec, toy_dataset, tmp_path):
        # Given a history path
        path = tmp_path / "history.csv"

        # When training
        train(toy_spec, toy_dataset, _config(), history_path=path, show_progress=False)

        # Then the file has the schema header and one row per epoch
        header, rows = ResultWriter.read_table(path, HISTORY_COLUMNS)
        assert tuple(header) == HISTORY_COLUMNS
        assert [int(float(row["epoch"])) for row in rows] == [0, 1, 2, 3]

    def test_clean_loss_decreases(self, toy_spec, toy_dataset):
        cfg = _config(epochs=20, warmup_epochs=20, ramp_epochs=0)
        result = train(toy_spec, toy_dataset, cfg, show_progress=False)
        assert result.history[-1].loss < result.history[0].loss

    @pytest.mark.parametrize("arithmetic", ["interval", "affine"])
    def test_micro_batches_match_whole_batch(
        self, toy_spec, toy_dataset, monkeypatch, arithmetic
    ):
        # Given one batch at a positive budget
        trainer = Trainer(toy_spec, _config(arithmetic=arithmetic), show_progress=False)
        theta = np.linspace(-1.0, 1.0, toy_spec.n_params)
        x, y = toy_dataset.features[:8], toy_dataset.labels[:8]
        state = ScheduleState(2, 0.5, 0.01)
        whole = trainer._batch_step(theta, x, y, state)

        # When splitting it into micro-batches of three
        monkeypatch.setattr(trainer, "micro_batch_size", lambda: 3)
        split = trainer._batch_step(theta, x, y, state)

        # Then the accumulated gradient and counts are unchanged
        np.testing.assert_allclose(split.gradient, whole.gradient, atol=1e-12)
        assert split.loss_sum == pytest.approx(whole.loss_sum)
        assert (split.correct, split.certified) == (whole.correct, whole.certified)

    @pytest.fixture
    def orthogonal_set(self) -> PreparedDataset:
        """|00>, |10> are class 0 and |01>, |11> class 1.

        After one RY layer and the ring, logit_0 = s_b cos(t1) and
        logit_1 = s_a s_b cos(t0) cos(t1), so every sample is correct exactly
        when cos(t1) > 0 and |cos(t0)| < 1.
        """
        return PreparedDataset(
            features=np.eye(4)[[0, 2, 1, 3]],
            labels=np.array([0, 0, 1, 1], dtype=np.intp),
            n_qubits=2,
            n_classes=2,
            name="orthogonal",
        )

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_clean_training_separates_orthogonal_set(self, orthogonal_set, seed):
        # Given a 1-layer circuit from random angles, trained clean for 30 epochs
        spec = CircuitSpec(2, 1, 2)
        cfg = _config(
            epochs=30,
            lr=0.1,
            batch_size=1,
            target_epsilon=0.0,
            warmup_epochs=30,
            ramp_epochs=0,
            seed=seed,
        )

        # When training
        result = train(spec, orthogonal_set, cfg, show_progress=False)

        # Then the final epoch classifies every sample
        assert result.history[-1].clean_acc == 1.0
        assert evaluation.test_accuracy(spec, result.params, orthogonal_set) == 1.0

    def test_training_recovers_from_misclassifying_start(self, orthogonal_set):
        # Given angles with cos(t1) < 0, which get every sample wrong
        spec = CircuitSpec(2, 1, 2)
        initial = ParamVector(np.array([0.3, 2.8]))
        assert evaluation.test_accuracy(spec, initial, orthogonal_set) == 0.0
        cfg = _config(
            epochs=30,
            lr=0.1,
            batch_size=1,
            target_epsilon=0.0,
            warmup_epochs=30,
            ramp_epochs=0,
        )

        # When training
        result = Trainer(spec, cfg, show_progress=False).train(
            orthogonal_set, initial=initial
        )

        # Then it learns the separating angles
        assert result.history[-1].clean_acc == 1.0
        assert np.cos(result.params.theta[1]) > 0.0

    def test_initial_params_are_used(self, toy_spec, toy_dataset):
        initial = ParamVector(np.zeros(toy_spec.n_params))
        cfg = _config(epochs=1, warmup_epochs=1, ramp_epochs=0)
        result = Trainer(toy_spec, cfg, show_progress=False).train(
            toy_dataset, initial=initial
        )
        # Zero angles already separate the toy clusters.
        assert result.history[0].clean_acc == 1.0

    def test_divergence_names_epoch_and_batch(self, toy_spec, toy_dataset, monkeypatch):
        trainer = Trainer(toy_spec, _config(), show_progress=False)

        def explode(*_args, **_kwargs):
            msg = "gradient has non-finite entries"
            raise NumericDomainError(msg)

        monkeypatch.setattr(trainer.optimizer, "step", explode)
        with pytest.raises(TrainingDivergedError) as exc_info:
            trainer.train(toy_dataset)
        assert (exc_info.value.epoch, exc_info.value.batch) == (0, 0)

    def test_feature_length_mismatch(self, toy_spec):
        dataset = PreparedDataset(np.ones((2, 8)) / np.sqrt(8), np.zeros(2, int), 3, 2)
        with pytest.raises(UsageError):
            Trainer(toy_spec, _config(), show_progress=False).train(dataset)

    def test_empty_dataset(self, toy_spec):
        dataset = PreparedDataset(np.zeros((0, 4)), np.zeros(0, int), 2, 2)
        with pytest.raises(UsageError):
            Trainer(toy_spec, _config(), show_progress=False).train(dataset)
