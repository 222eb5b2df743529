"""Run configuration: defaults, then a TOML/JSON file, then command-line flags.

A config file holds flat top-level keys named like the :class:`RunConfig`
fields and an optional ``[sweep]`` table of lists::

    dataset = "mnist"
    qubits = 4
    epochs = 30

    [sweep]
    epsilon = [0.001, 0.005, 0.01]
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import tomllib
from collections.abc import Callable, Iterator, Mapping
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from src import config
from src.core.circuit import CircuitSpec, RotationKind
from src.core.dataset_io import DATASETS, PreparedDataset, load_raw, prepare
from src.core.errors import ConfigError, UsageError
from src.core.evaluation import AttackConfig
from src.core.losses import DEFAULT_GAMMA, LossKind
from src.core.propagation import Arithmetic
from src.core.trainer import TrainConfig

logger = logging.getLogger(__name__)

SWEEP_KEYS: tuple[str, ...] = (
    "dataset",
    "qubits",
    "classes",
    "layers",
    "arithmetic",
    "loss",
    "epsilon",
    "kappa",
)


def _optional(caster: Callable[[Any], Any]) -> Callable[[Any], Any]:
    def cast(value: Any) -> Any:
        return None if value is None else caster(value)

    return cast


def _boolean(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in {"1", "true", "yes", "on"}:
        return True
    if text in {"0", "false", "no", "off"}:
        return False
    msg = f"not a boolean: {value!r}"
    raise ValueError(msg)


def _integer(value: Any) -> int:
    if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
        msg = f"not an integer: {value!r}"
        raise ValueError(msg)
    return int(value)


@dataclass(slots=True)
class RunConfig:
    """Every knob of a train/eval/certify/sweep run, with its default."""

    dataset: str = "mnist"
    data_root: str = field(default_factory=lambda: config.DATA_ROOT)
    output_dir: str = field(default_factory=lambda: config.OUTPUT_DIR)
    checkpoint: str | None = None
    qubits: int = 4
    classes: int = 2
    layers: int = 2
    rotation: str = "RY"
    epochs: int = 30
    lr: float = 0.005
    weight_decay: float = 0.01
    batch_size: int = 64
    kappa: float = 0.5
    epsilon: float = 0.001
    warmup: int = 5
    ramp: int = 15
    loss: str = "margin"
    gamma: float = DEFAULT_GAMMA
    arithmetic: str = "affine"
    perturb_imag: bool = False
    seed: int = field(default_factory=lambda: config.SEED)
    train_limit: int | None = None
    test_limit: int | None = None
    attack_steps: int = 40
    attack_step_size: float | None = None
    attack_restarts: int = 1
    jobs: int = field(default_factory=lambda: config.MAX_WORKERS)
    sweep: dict[str, list[Any]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for item in fields(self):
            if item.name == "sweep":
                continue
            value = getattr(self, item.name)
            try:
                setattr(self, item.name, _CASTERS[item.name](value))
            except (TypeError, ValueError) as exc:
                msg = f"invalid value for {item.name}: {value!r} ({exc})"
                raise ConfigError(msg, item.name) from exc
        self.validate()

    def validate(self) -> None:
        """Build every derived object once so bad values fail before compute."""
        if self.dataset not in DATASETS:
            msg = f"unknown dataset {self.dataset!r}; expected one of {DATASETS}"
            raise ConfigError(msg, "dataset")
        if self.qubits % 2:
            msg = f"qubits must be even to form a square image, got {self.qubits}"
            raise ConfigError(msg, "qubits")
        if self.jobs < 1:
            msg = f"jobs must be positive, got {self.jobs}"
            raise ConfigError(msg, "jobs")
        limits = {"train_limit": self.train_limit, "test_limit": self.test_limit}
        for key, limit in limits.items():
            if limit is not None and limit < 1:
                msg = f"{key} must be positive, got {limit}"
                raise ConfigError(msg, key)
        try:
            self.circuit_spec()
            self.train_config()
            self.attack_config()
        except UsageError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        SweepGrid.from_mapping(self.sweep)

    def circuit_spec(self) -> CircuitSpec:
        return CircuitSpec(
            n_qubits=self.qubits,
            n_layers=self.layers,
            n_classes=self.classes,
            rotation_kind=RotationKind(self.rotation),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            lr=self.lr,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            target_kappa=self.kappa,
            target_epsilon=self.epsilon,
            warmup_epochs=self.warmup,
            ramp_epochs=self.ramp,
            loss_kind=LossKind(self.loss),
            gamma=self.gamma,
            seed=self.seed,
            arithmetic=Arithmetic(self.arithmetic),
            perturb_imag=self.perturb_imag,
        )

    def attack_config(self) -> AttackConfig:
        return AttackConfig(
            epsilon=self.epsilon,
            steps=self.attack_steps,
            step_size=self.attack_step_size,
            restarts=self.attack_restarts,
            seed=self.seed,
        )

    def load_split(self, split: str, *, seed: int | None = None) -> PreparedDataset:
        """Load and prepare one split; ``seed`` overrides the shuffle seed."""
        raw = load_raw(self.data_root, self.dataset, split)
        limit = self.train_limit if split == "train" else self.test_limit
        return prepare(
            raw,
            self.qubits,
            self.classes,
            self.seed if seed is None else seed,
            limit=limit,
            name=f"{self.dataset}/{split}",
        )

    @property
    def checkpoint_path(self) -> Path:
        if self.checkpoint is not None:
            return Path(self.checkpoint)
        return Path(self.output_dir) / "model.json"

    def to_dict(self) -> dict[str, Any]:
        """Every field with defaults materialized, as in ``resolved_config.json``."""
        return asdict(self)

    def with_overrides(self, overrides: Mapping[str, Any]) -> RunConfig:
        """Copy with non-``None`` overrides applied; unknown keys raise ConfigError."""
        return _build(self.to_dict(), overrides, source="flags")


_CASTERS: dict[str, Callable[[Any], Any]] = {
    "dataset": str,
    "data_root": str,
    "output_dir": str,
    "checkpoint": _optional(str),
    "qubits": _integer,
    "classes": _integer,
    "layers": _integer,
    "rotation": lambda value: str(RotationKind(str(value).upper())),
    "epochs": _integer,
    "lr": float,
    "weight_decay": float,
    "batch_size": _integer,
    "kappa": float,
    "epsilon": float,
    "warmup": _integer,
    "ramp": _integer,
    "loss": lambda value: str(LossKind(str(value))),
    "gamma": float,
    "arithmetic": lambda value: str(Arithmetic(str(value))),
    "perturb_imag": _boolean,
    "seed": _integer,
    "train_limit": _optional(_integer),
    "test_limit": _optional(_integer),
    "attack_steps": _integer,
    "attack_step_size": _optional(float),
    "attack_restarts": _integer,
    "jobs": _integer,
}
CONFIG_KEYS = frozenset(_CASTERS) | {"sweep"}


def _build(
    base: Mapping[str, Any], updates: Mapping[str, Any], *, source: str
) -> RunConfig:
    merged = dict(base)
    for key, value in updates.items():
        if key not in CONFIG_KEYS:
            msg = f"unknown configuration key {key!r} in {source}"
            raise ConfigError(msg, key)
        if value is None:
            continue
        if key == "sweep" and not isinstance(value, Mapping):
            msg = f"sweep must be a table of lists in {source}"
            raise ConfigError(msg, key)
        merged[key] = dict(value) if key == "sweep" else value
    return RunConfig(**merged)


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Parse a TOML or JSON config file into a plain mapping."""
    source = Path(path)
    if not source.is_file():
        msg = f"config file not found: {source}"
        raise FileNotFoundError(msg)
    try:
        if source.suffix.lower() == ".json":
            data = json.loads(source.read_text(encoding="utf-8"))
        else:
            with source.open("rb") as handle:
                data = tomllib.load(handle)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        msg = f"cannot parse config file {source}: {exc}"
        raise ConfigError(msg) from exc
    if not isinstance(data, dict):
        msg = f"config file {source} must hold a table of keys"
        raise ConfigError(msg)
    return data


def load_run_config(
    path: str | Path | None = None, overrides: Mapping[str, Any] | None = None
) -> RunConfig:
    """Defaults, then ``path`` (if given), then ``overrides`` (``None`` values skip)."""
    resolved = RunConfig()
    if path is not None:
        resolved = _build(resolved.to_dict(), read_config_file(path), source=str(path))
        logger.info("config=%s loaded", path)
    if overrides:
        resolved = resolved.with_overrides(overrides)
    return resolved


def row_seed(base_seed: int, values: Mapping[str, Any]) -> int:
    """Stable 32-bit seed derived from a sweep row's configuration."""
    payload = json.dumps(
        {"seed": base_seed, **{key: values[key] for key in SWEEP_KEYS}},
        sort_keys=True,
    )
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


@dataclass(frozen=True, slots=True)
class SweepGrid:
    """Lists of values per sweep key; missing keys keep the base value."""

    axes: dict[str, tuple[Any, ...]]

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> SweepGrid:
        axes: dict[str, tuple[Any, ...]] = {}
        for key, values in data.items():
            if key not in SWEEP_KEYS:
                msg = f"unknown sweep key {key!r}; expected one of {SWEEP_KEYS}"
                raise ConfigError(msg, key)
            items = tuple(values) if isinstance(values, list | tuple) else (values,)
            if not items:
                msg = f"sweep key {key!r} has no values"
                raise ConfigError(msg, key)
            axes[key] = items
        return cls(axes)

    def size(self) -> int:
        total = 1
        for values in self.axes.values():
            total *= len(values)
        return total

    def rows(self, base: RunConfig) -> Iterator[RunConfig]:
        """Cartesian product in :data:`SWEEP_KEYS` order, last key fastest."""
        columns = [self.axes.get(key, (getattr(base, key),)) for key in SWEEP_KEYS]
        for combination in itertools.product(*columns):
            values = dict(zip(SWEEP_KEYS, combination, strict=True))
            row = _build(replace(base, sweep={}).to_dict(), values, source="sweep")
            yield replace(row, seed=row_seed(base.seed, row.to_dict()))
