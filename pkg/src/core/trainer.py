"""Certified training loop with kappa/epsilon schedules."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from src import config
from src.core import autodiff as ad
from src.core.circuit import CircuitSpec, ParamVector, exact_logits, init_params
from src.core.dataset_io import PreparedDataset, batches
from src.core.errors import NumericDomainError, TrainingDivergedError, UsageError
from src.core.losses import DEFAULT_GAMMA, LossKind, loss
from src.core.optimizer import AdamW, OptimizerState
from src.core.propagation import (
    Arithmetic,
    BoundedLogits,
    certify_batch,
    chunk_size,
    propagate_bounds,
)
from src.utils.result_writer import HISTORY_COLUMNS, ResultWriter
from src.utils.rich_logging import make_progress

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class TrainConfig:
    """Hyperparameters of one training run."""

    epochs: int = 30
    lr: float = 0.005
    weight_decay: float = 0.01
    batch_size: int = 64
    target_kappa: float = 0.5
    target_epsilon: float = 0.001
    warmup_epochs: int = 5
    ramp_epochs: int = 15
    loss_kind: LossKind = LossKind.MARGIN
    gamma: float = DEFAULT_GAMMA
    seed: int = field(default_factory=lambda: config.SEED)
    arithmetic: Arithmetic = Arithmetic.AFFINE
    perturb_imag: bool = False

    def __post_init__(self) -> None:
        try:
            self.loss_kind = LossKind(self.loss_kind)
            self.arithmetic = Arithmetic(self.arithmetic)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        if self.epochs < 1 or self.batch_size < 1:
            msg = "epochs and batch_size must be positive"
            raise UsageError(msg)
        if self.warmup_epochs < 0 or self.ramp_epochs < 0:
            msg = "warmup_epochs and ramp_epochs must be nonnegative"
            raise UsageError(msg)
        if self.warmup_epochs + self.ramp_epochs > self.epochs:
            msg = (
                f"warmup ({self.warmup_epochs}) + ramp ({self.ramp_epochs}) "
                f"exceeds epochs ({self.epochs})"
            )
            raise UsageError(msg)
        if not 0.0 <= self.target_kappa <= 1.0:
            msg = f"target_kappa must lie in [0, 1], got {self.target_kappa}"
            raise UsageError(msg)
        if not (np.isfinite(self.target_epsilon) and self.target_epsilon >= 0.0):
            msg = f"target_epsilon must be finite and >= 0, got {self.target_epsilon}"
            raise UsageError(msg)
        if not (np.isfinite(self.gamma) and self.gamma >= 0.0):
            msg = f"gamma must be finite and >= 0, got {self.gamma}"
            raise UsageError(msg)


@dataclass(frozen=True, slots=True)
class ScheduleState:
    epoch: int
    kappa: float
    epsilon: float


def schedule(epoch: int, cfg: TrainConfig) -> ScheduleState:
    """Warmup at (1, 0), then a linear ramp reaching the targets on its last epoch."""
    if not 0 <= epoch < cfg.epochs:
        msg = f"epoch {epoch} out of range [0, {cfg.epochs})"
        raise UsageError(msg)
    if epoch < cfg.warmup_epochs:
        return ScheduleState(epoch, 1.0, 0.0)
    if epoch < cfg.warmup_epochs + cfg.ramp_epochs:
        done = (epoch - cfg.warmup_epochs + 1) / cfg.ramp_epochs
        kappa = cfg.target_kappa + (1.0 - done) * (1.0 - cfg.target_kappa)
        return ScheduleState(epoch, kappa, done * cfg.target_epsilon)
    return ScheduleState(epoch, cfg.target_kappa, cfg.target_epsilon)


@dataclass(frozen=True, slots=True)
class EpochRecord:
    epoch: int
    kappa: float
    epsilon: float
    loss: float
    clean_acc: float
    cert_frac: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(slots=True)
class TrainResult:
    params: ParamVector
    history: list[EpochRecord]
    optimizer_state: OptimizerState
    duration_seconds: float = 0.0


@dataclass(slots=True)
class _BatchOutcome:
    loss_sum: float
    gradient: NDArray[np.float64]
    correct: int
    certified: int


class Trainer:
    """Mini-batch AdamW training on clean and bound-aware losses."""

    def __init__(
        self,
        spec: CircuitSpec,
        cfg: TrainConfig,
        *,
        show_progress: bool = True,
    ) -> None:
        self.spec = spec
        self.cfg = cfg
        self.show_progress = show_progress
        self.optimizer = AdamW(lr=cfg.lr, weight_decay=cfg.weight_decay)

    def micro_batch_size(self) -> int:
        return chunk_size(
            self.spec,
            self.cfg.arithmetic,
            self.cfg.batch_size,
            perturb_imag=self.cfg.perturb_imag,
        )

    def _check_dataset(self, dataset: PreparedDataset) -> None:
        if len(dataset) == 0:
            msg = "training set is empty"
            raise UsageError(msg)
        if dataset.features.shape[-1] != self.spec.n_amplitudes:
            msg = (
                f"features have length {dataset.features.shape[-1]}, "
                f"circuit expects {self.spec.n_amplitudes}"
            )
            raise UsageError(msg)
        labels = dataset.labels
        if np.any(labels >= self.spec.n_classes) or np.any(labels < 0):
            msg = f"labels must lie in [0, {self.spec.n_classes})"
            raise UsageError(msg)

    def _chunk_step(
        self,
        theta: NDArray[np.float64],
        x: NDArray[np.float64],
        y: NDArray[np.intp],
        state: ScheduleState,
        scale: float,
    ) -> _BatchOutcome:
        captured: dict[str, Any] = {}

        def objective(theta: Any) -> Any:
            logits = exact_logits(self.spec, theta, x)
            bounds = None
            if state.kappa < 1.0:
                bounds = propagate_bounds(
                    self.spec,
                    theta,
                    x,
                    state.epsilon,
                    self.cfg.arithmetic,
                    perturb_imag=self.cfg.perturb_imag,
                )
            per_sample = loss(
                bounds,
                logits,
                y,
                state.kappa,
                self.cfg.loss_kind,
                self.cfg.gamma,
            )
            captured["logits"] = ad.value_of(logits)
            captured["bounds"] = bounds
            return ad.mul(ad.reduce_sum(per_sample), scale)

        recording = ad.record(objective, {"theta": theta})
        loss_value = float(recording.value)
        if not np.isfinite(loss_value):
            msg = "loss is not finite"
            raise NumericDomainError(msg)
        grads = ad.backward(recording.tape, recording.output)

        bounds: BoundedLogits | None = captured["bounds"]
        if bounds is None:
            bounds = propagate_bounds(
                self.spec,
                theta,
                x,
                state.epsilon,
                self.cfg.arithmetic,
                perturb_imag=self.cfg.perturb_imag,
            )
        predicted = np.argmax(captured["logits"], axis=-1)
        return _BatchOutcome(
            loss_sum=loss_value / scale,
            gradient=grads["theta"],
            correct=int(np.sum(predicted == y)),
            certified=int(np.sum(certify_batch(bounds, y))),
        )

    def _batch_step(
        self,
        theta: NDArray[np.float64],
        x: NDArray[np.float64],
        y: NDArray[np.intp],
        state: ScheduleState,
    ) -> _BatchOutcome:
        """Gradient of the batch-mean loss, accumulated over micro-batches in order."""
        scale = 1.0 / len(y)
        total = _BatchOutcome(0.0, np.zeros_like(theta), 0, 0)
        for chunk in batches(len(y), self.micro_batch_size()):
            part = self._chunk_step(theta, x[chunk], y[chunk], state, scale)
            total.loss_sum += part.loss_sum
            total.gradient = total.gradient + part.gradient
            total.correct += part.correct
            total.certified += part.certified
        return total

    def train(
        self,
        dataset: PreparedDataset,
        initial: ParamVector | None = None,
        history_path: str | Path | None = None,
    ) -> TrainResult:
        """Run every epoch and return the final parameters with per-epoch history."""
        self._check_dataset(dataset)
        start_time = time.perf_counter()
        init_seed, shuffle_seed = np.random.SeedSequence(self.cfg.seed).spawn(2)
        params = (
            init_params(self.spec, np.random.default_rng(init_seed))
            if initial is None
            else initial
        )
        params.check(self.spec)
        shuffle_rng = np.random.default_rng(shuffle_seed)

        theta = params.theta.copy()
        opt_state = OptimizerState.zeros(theta.size)
        history: list[EpochRecord] = []
        n_batches = -(-len(dataset) // self.cfg.batch_size)

        with make_progress(enabled=self.show_progress) as progress:
            task = progress.add_task(
                "[cyan]Training", total=self.cfg.epochs * n_batches
            )
            for epoch in range(self.cfg.epochs):
                state = schedule(epoch, self.cfg)
                order = shuffle_rng.permutation(len(dataset))
                loss_sum = 0.0
                correct = 0
                certified = 0
                for batch, index in enumerate(
                    batches(len(dataset), self.cfg.batch_size, order)
                ):
                    x, y = dataset.features[index], dataset.labels[index]
                    try:
                        outcome = self._batch_step(theta, x, y, state)
                        theta = self.optimizer.step(theta, outcome.gradient, opt_state)
                    except NumericDomainError as exc:
                        logger.exception("epoch=%d batch=%d diverged", epoch, batch)
                        raise TrainingDivergedError(epoch, batch) from exc
                    loss_sum += outcome.loss_sum
                    correct += outcome.correct
                    certified += outcome.certified
                    progress.update(
                        task,
                        advance=1,
                        description=f"[cyan]Epoch {epoch + 1}/{self.cfg.epochs}",
                    )

                record = EpochRecord(
                    epoch=epoch,
                    kappa=state.kappa,
                    epsilon=state.epsilon,
                    loss=loss_sum / len(dataset),
                    clean_acc=correct / len(dataset),
                    cert_frac=certified / len(dataset),
                )
                history.append(record)
                logger.info(
                    "epoch=%d kappa=%.4f epsilon=%.6f loss=%.5f "
                    "clean_acc=%.4f cert_frac=%.4f",
                    record.epoch,
                    record.kappa,
                    record.epsilon,
                    record.loss,
                    record.clean_acc,
                    record.cert_frac,
                )
                if history_path is not None:
                    ResultWriter.append_row(
                        history_path, HISTORY_COLUMNS, record.to_dict()
                    )

        duration = time.perf_counter() - start_time
        logger.info("training done epochs=%d duration=%.2fs", self.cfg.epochs, duration)
        return TrainResult(
            params=ParamVector(theta),
            history=history,
            optimizer_state=opt_state,
            duration_seconds=duration,
        )


def train(  # noqa: PLR0913
    spec: CircuitSpec,
    dataset: PreparedDataset,
    cfg: TrainConfig,
    *,
    initial: ParamVector | None = None,
    history_path: str | Path | None = None,
    show_progress: bool = True,
) -> TrainResult:
    trainer = Trainer(spec, cfg, show_progress=show_progress)
    return trainer.train(dataset, initial=initial, history_path=history_path)
