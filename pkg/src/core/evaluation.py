"""Test, certified and PGD accuracy of a trained classifier.

The attack perturbs the normalized feature vector inside the same L-infinity
box that certification covers and does not renormalize, so a certified sample
can never be flipped by it. :func:`evaluate` enforces that ordering.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src import config
from src.core import autodiff as ad
from src.core.circuit import (
    CircuitSpec,
    ParamVector,
    exact_logits,
    forward_exact,
)
from src.core.dataset_io import PreparedDataset, batches
from src.core.errors import SoundnessError, UsageError
from src.core.losses import cross_entropy
from src.core.propagation import (
    Arithmetic,
    certify_batch,
    chunk_size,
    propagate_bounds,
)
from src.utils.result_writer import SWEEP_COLUMNS
from src.utils.rich_logging import make_progress

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]


@dataclass(frozen=True, slots=True)
class AttackConfig:
    """Projected gradient ascent on cross-entropy inside ``x0 +- epsilon``.

    ``step_size`` defaults to ``epsilon / 10``.
    """

    epsilon: float
    steps: int = 40
    step_size: float | None = None
    restarts: int = 1
    seed: int = field(default_factory=lambda: config.SEED)

    def __post_init__(self) -> None:
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0.0):
            msg = f"attack epsilon must be finite and >= 0, got {self.epsilon}"
            raise UsageError(msg)
        if self.steps < 1 or self.restarts < 1:
            msg = "attack steps and restarts must be at least 1"
            raise UsageError(msg)
        if self.step_size is not None and not (
            np.isfinite(self.step_size) and self.step_size > 0.0
        ):
            msg = f"attack step_size must be positive, got {self.step_size}"
            raise UsageError(msg)

    @property
    def resolved_step_size(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return self.epsilon / 10.0


def _theta(params: ParamVector | ArrayLike) -> Array:
    if isinstance(params, ParamVector):
        return params.theta
    return np.asarray(params, dtype=np.float64)


def _check_nonempty(dataset: PreparedDataset) -> None:
    if len(dataset) == 0:
        msg = "evaluation set is empty"
        raise UsageError(msg)


def predict(
    spec: CircuitSpec, params: ParamVector | ArrayLike, features: ArrayLike
) -> NDArray[np.intp]:
    """Argmax class per sample; ties go to the lowest class index."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    theta = _theta(params)
    out = np.empty(len(x), dtype=np.intp)
    for index in batches(len(x), config.EVAL_BATCH):
        out[index] = np.argmax(forward_exact(spec, theta, x[index]), axis=-1)
    return out


def test_accuracy(
    spec: CircuitSpec, params: ParamVector | ArrayLike, dataset: PreparedDataset
) -> float:
    _check_nonempty(dataset)
    predictions = predict(spec, params, dataset.features)
    return float(np.mean(predictions == dataset.labels))


test_accuracy.__test__ = False  # type: ignore[attr-defined]


@dataclass(slots=True)
class CertificationResult:
    """Per-sample certification outcome at one budget."""

    labels: NDArray[np.intp]
    predictions: NDArray[np.intp]
    certified: NDArray[np.bool_]
    true_lower: Array
    max_other_upper: Array

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.certified)) if self.certified.size else 0.0

    def rows(self) -> list[dict[str, Any]]:
        return [
            {
                "index": index,
                "label": int(self.labels[index]),
                "prediction": int(self.predictions[index]),
                "certified": int(self.certified[index]),
                "true_lower": float(self.true_lower[index]),
                "max_other_upper": float(self.max_other_upper[index]),
            }
            for index in range(self.labels.size)
        ]


def certify_dataset(  # noqa: PLR0913
    spec: CircuitSpec,
    params: ParamVector | ArrayLike,
    dataset: PreparedDataset,
    epsilon: float,
    arithmetic: Arithmetic | str = Arithmetic.AFFINE,
    *,
    perturb_imag: bool = False,
    show_progress: bool = False,
) -> CertificationResult:
    """Propagate bounds for every sample and record the certification margin."""
    theta = _theta(params)
    size = len(dataset)
    labels = dataset.labels
    true_lower = np.empty(size)
    max_other = np.full(size, -np.inf)
    certified = np.zeros(size, dtype=bool)
    step = chunk_size(spec, arithmetic, config.EVAL_BATCH, perturb_imag=perturb_imag)

    with make_progress(enabled=show_progress) as progress:
        task = progress.add_task("[cyan]Certifying", total=size)
        for index in batches(size, step):
            bounds = propagate_bounds(
                spec,
                theta,
                dataset.features[index],
                epsilon,
                arithmetic,
                perturb_imag=perturb_imag,
            )
            lo, hi = bounds.arrays()
            rows = np.arange(len(index))
            true_lower[index] = lo[rows, labels[index]]
            if spec.n_classes > 1:
                others = hi.copy()
                others[rows, labels[index]] = -np.inf
                max_other[index] = others.max(axis=-1)
            certified[index] = certify_batch(bounds, labels[index])
            progress.update(task, advance=len(index))

    return CertificationResult(
        labels=labels,
        predictions=predict(spec, theta, dataset.features),
        certified=certified,
        true_lower=true_lower,
        max_other_upper=max_other,
    )


def certified_accuracy(  # noqa: PLR0913
    spec: CircuitSpec,
    params: ParamVector | ArrayLike,
    dataset: PreparedDataset,
    epsilon: float,
    arithmetic: Arithmetic | str = Arithmetic.AFFINE,
    *,
    perturb_imag: bool = False,
) -> float:
    result = certify_dataset(
        spec, params, dataset, epsilon, arithmetic, perturb_imag=perturb_imag
    )
    return result.accuracy


def _ce_and_gradient(
    spec: CircuitSpec, theta: Array, x: Array, labels: NDArray[np.intp]
) -> tuple[Array, Array]:
    captured: dict[str, Array] = {}

    def objective(features: Any) -> Any:
        per_sample = cross_entropy(exact_logits(spec, theta, features), labels)
        captured["loss"] = np.asarray(ad.value_of(per_sample))
        return ad.reduce_sum(per_sample)

    _, grads = ad.gradient(objective, {"features": x})
    return captured["loss"], grads["features"]


def pgd_attack_batch(
    spec: CircuitSpec,
    params: ParamVector | ArrayLike,
    features: ArrayLike,
    labels: ArrayLike,
    attack: AttackConfig,
) -> Array:
    """Highest-loss point found per sample over every step of every restart.

    The clean sample is a candidate too, so the returned loss never drops
    below the clean loss.
    """
    x0 = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    if attack.epsilon == 0.0 or spec.n_classes == 1:
        return x0.copy()

    theta = _theta(params)
    lower = x0 - attack.epsilon
    upper = x0 + attack.epsilon
    step_size = attack.resolved_step_size
    rng = np.random.default_rng(attack.seed)

    best = x0.copy()
    best_loss, _ = _ce_and_gradient(spec, theta, x0, y)
    for _ in range(attack.restarts):
        x = rng.uniform(lower, upper)
        for _ in range(attack.steps):
            current, grad = _ce_and_gradient(spec, theta, x, y)
            improved = current > best_loss
            best[improved] = x[improved]
            best_loss = np.where(improved, current, best_loss)
            x = np.clip(x + step_size * np.sign(grad), lower, upper)
        current, _ = _ce_and_gradient(spec, theta, x, y)
        improved = current > best_loss
        best[improved] = x[improved]
        best_loss = np.where(improved, current, best_loss)
    return best


def pgd_attack(
    spec: CircuitSpec,
    params: ParamVector | ArrayLike,
    sample: ArrayLike,
    label: int,
    attack: AttackConfig,
) -> Array:
    """Adversarial feature vector for one sample."""
    return pgd_attack_batch(spec, params, sample, [label], attack)[0]


@dataclass(slots=True)
class EvalReport:
    test_acc: float
    cert_acc: float
    pgd_acc: float
    epsilon: float
    arithmetic: Arithmetic
    correct: NDArray[np.bool_]
    certified: NDArray[np.bool_]
    survived: NDArray[np.bool_]
    attack: AttackConfig

    @property
    def n_samples(self) -> int:
        return int(self.correct.size)

    def to_dict(self) -> dict[str, Any]:
        return {
            "test_acc": self.test_acc,
            "cert_acc": self.cert_acc,
            "pgd_acc": self.pgd_acc,
            "epsilon": self.epsilon,
            "arithmetic": str(self.arithmetic),
            "n_samples": self.n_samples,
            "attack": {
                "steps": self.attack.steps,
                "step_size": self.attack.resolved_step_size,
                "restarts": self.attack.restarts,
                "seed": self.attack.seed,
            },
        }

    def to_csv_row(self, context: Mapping[str, Any]) -> dict[str, Any]:
        """One sweep-table row; ``context`` supplies the non-metric columns."""
        row = {
            "epsilon": self.epsilon,
            "arithmetic": str(self.arithmetic),
            "test_acc": self.test_acc,
            "cert_acc": self.cert_acc,
            "pgd_acc": self.pgd_acc,
        }
        missing = [c for c in SWEEP_COLUMNS if c not in row and c not in context]
        if missing:
            msg = f"missing sweep columns: {', '.join(missing)}"
            raise UsageError(msg)
        return {c: row[c] if c in row else context[c] for c in SWEEP_COLUMNS}


def evaluate(  # noqa: PLR0913
    spec: CircuitSpec,
    params: ParamVector | ArrayLike,
    dataset: PreparedDataset,
    epsilon: float,
    arithmetic: Arithmetic | str = Arithmetic.AFFINE,
    attack: AttackConfig | None = None,
    *,
    perturb_imag: bool = False,
    show_progress: bool = False,
) -> EvalReport:
    """All three accuracies on the same samples.

    Raises:
        SoundnessError: If an attack flips a certified sample.
    """
    _check_nonempty(dataset)
    arithmetic = Arithmetic(arithmetic)
    theta = _theta(params)
    if attack is None:
        attack = AttackConfig(epsilon)
    elif attack.epsilon != epsilon:
        logger.debug(
            "attack epsilon=%g replaced by epsilon=%g", attack.epsilon, epsilon
        )
        attack = replace(attack, epsilon=epsilon)

    cert = certify_dataset(
        spec,
        theta,
        dataset,
        epsilon,
        arithmetic,
        perturb_imag=perturb_imag,
        show_progress=show_progress,
    )
    correct = cert.predictions == dataset.labels

    survived = np.zeros(len(dataset), dtype=bool)
    with make_progress(enabled=show_progress) as progress:
        task = progress.add_task("[cyan]PGD attack", total=len(dataset))
        for index in batches(len(dataset), config.EVAL_BATCH):
            adversarial = pgd_attack_batch(
                spec, theta, dataset.features[index], dataset.labels[index], attack
            )
            adv_pred = np.argmax(exact_logits(spec, theta, adversarial), axis=-1)
            survived[index] = correct[index] & (adv_pred == dataset.labels[index])
            progress.update(task, advance=len(index))

    flipped = np.flatnonzero(cert.certified & ~survived)
    if flipped.size:
        msg = (
            f"{flipped.size} certified samples were flipped by the attack "
            f"(first index {int(flipped[0])}) at epsilon={epsilon}"
        )
        raise SoundnessError(msg)

    report = EvalReport(
        test_acc=float(np.mean(correct)),
        cert_acc=cert.accuracy,
        pgd_acc=float(np.mean(survived)),
        epsilon=epsilon,
        arithmetic=arithmetic,
        correct=correct,
        certified=cert.certified,
        survived=survived,
        attack=attack,
    )
    logger.info(
        "epsilon=%g arithmetic=%s test_acc=%.4f cert_acc=%.4f pgd_acc=%.4f",
        epsilon,
        arithmetic,
        report.test_acc,
        report.cert_acc,
        report.pgd_acc,
    )
    return report
