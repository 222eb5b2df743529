"""CSV/JSON result files and tidy reshaping for external plotting.

All CSV files are UTF-8, comma-delimited, with a header row. Column order is
part of the schema; changing it requires bumping :data:`SCHEMA_VERSION`.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any, Literal

from src.core.errors import CsvFormatError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

CONFIG_COLUMNS: tuple[str, ...] = (
    "dataset",
    "qubits",
    "classes",
    "layers",
    "arithmetic",
    "loss",
    "epsilon",
    "kappa",
)
METRIC_COLUMNS: tuple[str, ...] = ("test_acc", "cert_acc", "pgd_acc")
SWEEP_COLUMNS: tuple[str, ...] = (*CONFIG_COLUMNS, *METRIC_COLUMNS, "seed", "wall_time")
HISTORY_COLUMNS: tuple[str, ...] = (
    "epoch",
    "kappa",
    "epsilon",
    "loss",
    "clean_acc",
    "cert_frac",
)
CERTIFY_COLUMNS: tuple[str, ...] = (
    "index",
    "label",
    "prediction",
    "certified",
    "true_lower",
    "max_other_upper",
)

_HISTORY_KEYS: tuple[str, ...] = ("epoch", "kappa", "epsilon")
_HISTORY_METRICS: tuple[str, ...] = ("loss", "clean_acc", "cert_frac")
_NUMERIC_COLUMNS = frozenset(
    {"qubits", "classes", "layers", "epsilon", "kappa", "seed", "wall_time"}
    | set(METRIC_COLUMNS)
    | set(HISTORY_COLUMNS)
)

TableKind = Literal["sweep", "history"]


def _format(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    return value


class ResultWriter:
    """Static helpers for the files every command writes."""

    @staticmethod
    def write_json(path: str | Path, data: Mapping[str, Any]) -> None:
        output = Path(path)
        output.parent.mkdir(parents=True, exist_ok=True)
        with output.open("w", encoding="utf-8") as handle:
            json.dump(data, handle, indent=2, sort_keys=False)
            handle.write("\n")
        logger.info("wrote %s", output)

    @staticmethod
    def write_csv(
        path: str | Path,
        columns: Sequence[str],
        rows: Iterable[Mapping[str, Any]],
    ) -> int:
        """Write ``rows`` under ``columns``; return the number of data rows."""
        output = Path(path)
        output.parent.mkdir(parents=True, exist_ok=True)
        count = 0
        with output.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_format(row[column]) for column in columns])
                count += 1
        logger.info("wrote %s rows=%d", output, count)
        return count

    @staticmethod
    def append_row(
        path: str | Path, columns: Sequence[str], row: Mapping[str, Any]
    ) -> None:
        """Append one row, writing the header first when the file is new or empty."""
        output = Path(path)
        output.parent.mkdir(parents=True, exist_ok=True)
        fresh = not output.exists() or output.stat().st_size == 0
        with output.open("a", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            if fresh:
                writer.writerow(columns)
            writer.writerow([_format(row[column]) for column in columns])

    @staticmethod
    def read_table(
        path: str | Path, columns: Sequence[str] | None = None
    ) -> tuple[list[str], list[dict[str, str]]]:
        """Read a CSV file, validating field counts and numeric columns.

        Raises:
            CsvFormatError: With the 1-based line number of the first bad line.
        """
        with Path(path).open(encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            try:
                header = next(reader)
            except StopIteration:
                return list(columns or ()), []
            except csv.Error as exc:
                raise CsvFormatError(str(exc), 1) from exc
            if columns is not None and tuple(header) != tuple(columns):
                msg = f"unexpected header {header}"
                raise CsvFormatError(msg, 1)

            rows: list[dict[str, str]] = []
            try:
                for fields in reader:
                    line = reader.line_num
                    if not fields:
                        continue
                    if len(fields) != len(header):
                        msg = f"expected {len(header)} fields, found {len(fields)}"
                        raise CsvFormatError(msg, line)
                    row = dict(zip(header, fields, strict=True))
                    for column, text in row.items():
                        if column in _NUMERIC_COLUMNS and not _is_number(text):
                            msg = f"column {column!r} is not numeric: {text!r}"
                            raise CsvFormatError(msg, line)
                    rows.append(row)
            except csv.Error as exc:
                raise CsvFormatError(str(exc), reader.line_num) from exc
        return header, rows

    @staticmethod
    def detect_kind(header: Sequence[str]) -> TableKind:
        if tuple(header) == SWEEP_COLUMNS:
            return "sweep"
        if tuple(header) in {HISTORY_COLUMNS, ()}:
            return "history"
        msg = f"header matches neither the sweep nor the history schema: {list(header)}"
        raise CsvFormatError(msg, 1)

    @staticmethod
    def emit_plot_data(
        source: str | Path,
        destination: str | Path,
        kind: TableKind | None = None,
    ) -> int:
        """Reshape a sweep or history CSV into long rows ``(keys..., metric, value)``.

        Returns the number of tidy rows written.
        """
        header, rows = ResultWriter.read_table(source)
        kind = kind or ResultWriter.detect_kind(header)
        expected = SWEEP_COLUMNS if kind == "sweep" else HISTORY_COLUMNS
        if header and tuple(header) != expected:
            msg = f"header does not match the {kind} schema"
            raise CsvFormatError(msg, 1)

        keys, metrics = (
            (CONFIG_COLUMNS, METRIC_COLUMNS)
            if kind == "sweep"
            else (_HISTORY_KEYS, _HISTORY_METRICS)
        )
        tidy = [
            {**{key: row[key] for key in keys}, "metric": metric, "value": row[metric]}
            for row in rows
            for metric in metrics
        ]
        return ResultWriter.write_csv(destination, (*keys, "metric", "value"), tidy)


def _is_number(text: str) -> bool:
    try:
        value = float(text)
    except ValueError:
        return False
    return not math.isnan(value)
