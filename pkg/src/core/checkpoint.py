"""JSON model files holding the circuit architecture and trained angles.

Layout::

    {"format": "vqc-checkpoint", "version": 1,
     "spec": {"n_qubits", "n_layers", "n_classes", "rotation_kind", "entangler"},
     "theta": [...],
     "metadata": {...}}

``json`` writes floats with ``repr`` precision, so a load reproduces theta
bitwise.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from src.core.circuit import CircuitSpec, ParamVector
from src.core.errors import UsageError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "vqc-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(slots=True)
class Checkpoint:
    spec: CircuitSpec
    params: ParamVector
    metadata: dict[str, Any] = field(default_factory=dict)


def checkpoint_to_dict(
    spec: CircuitSpec,
    params: ParamVector,
    metadata: Mapping[str, Any] | None = None,
) -> dict[str, Any]:
    params.check(spec)
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": spec.to_dict(),
        "theta": [float(value) for value in params.theta],
        "metadata": dict(metadata or {}),
    }


def checkpoint_from_dict(data: Mapping[str, Any]) -> Checkpoint:
    if data.get("format") != CHECKPOINT_FORMAT:
        msg = f"not a model file: format is {data.get('format')!r}"
        raise UsageError(msg)
    if data.get("version") != CHECKPOINT_VERSION:
        msg = f"unsupported model file version {data.get('version')!r}"
        raise UsageError(msg)
    try:
        spec = CircuitSpec.from_dict(data["spec"])
        params = ParamVector(np.asarray(data["theta"], dtype=np.float64))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        msg = f"malformed model file: {exc}"
        raise UsageError(msg) from exc
    params.check(spec)
    return Checkpoint(spec=spec, params=params, metadata=dict(data.get("metadata", {})))


def save_checkpoint(
    path: str | Path,
    spec: CircuitSpec,
    params: ParamVector,
    metadata: Mapping[str, Any] | None = None,
) -> Path:
    output = Path(path)
    output.parent.mkdir(parents=True, exist_ok=True)
    payload = checkpoint_to_dict(spec, params, metadata)
    with output.open("w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")
    logger.info("saved model=%s params=%d", output, spec.n_params)
    return output


def load_checkpoint(path: str | Path) -> Checkpoint:
    source = Path(path)
    try:
        data = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        msg = f"model file {source} is not valid JSON: {exc}"
        raise UsageError(msg) from exc
    if not isinstance(data, dict):
        msg = f"model file {source} does not hold a JSON object"
        raise UsageError(msg)
    checkpoint = checkpoint_from_dict(data)
    logger.debug("loaded model=%s spec=%s", source, checkpoint.spec)
    return checkpoint
