"""Defaults sourced from environment variables (optionally via a ``.env`` file).

Every variable is optional; a present but malformed value raises ``ValueError``
naming the variable.
"""

from __future__ import annotations

import os
from typing import TYPE_CHECKING

from dotenv import load_dotenv

if TYPE_CHECKING:
    from collections.abc import Callable

load_dotenv()

MAX_WORKERS_LIMIT = 10


def _cast(value: str, caster: Callable[[str], object], name: str) -> object:
    try:
        return caster(value)
    except Exception as exc:  # pragma: no cover - branch exercised via ValueError path
        msg = f"Environment variable {name} is invalid: {exc}"
        raise ValueError(msg) from exc


def _optional_int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    value = _cast(raw, int, name)
    assert isinstance(value, int)
    return value


def _optional_str_env(name: str, default: str) -> str:
    raw = os.getenv(name)
    return default if raw is None or raw == "" else raw


def _positive(name: str, value: int) -> int:
    if value < 1:
        msg = f"Environment variable {name} is invalid: must be positive, got {value}"
        raise ValueError(msg)
    return value


DATA_ROOT: str = _optional_str_env("VQC_DATA_ROOT", "data")
OUTPUT_DIR: str = _optional_str_env("VQC_OUTPUT_DIR", "runs")
SEED: int = _optional_int_env("VQC_SEED", 1234)
LOG_LEVEL: str = _optional_str_env("VQC_LOG_LEVEL", "INFO").upper()
EVAL_BATCH: int = _positive("VQC_EVAL_BATCH", _optional_int_env("VQC_EVAL_BATCH", 256))
_raw_max_workers = _optional_int_env("VQC_MAX_WORKERS", 1)
MAX_WORKERS: int = max(1, min(MAX_WORKERS_LIMIT, _raw_max_workers))

__all__: tuple[str, ...] = (
    "DATA_ROOT",
    "EVAL_BATCH",
    "LOG_LEVEL",
    "MAX_WORKERS",
    "OUTPUT_DIR",
    "SEED",
)
