"""Tests for result files and tidy plot data."""

import json

import pytest

from src.core.errors import CsvFormatError
from src.utils.result_writer import (
    CONFIG_COLUMNS,
    HISTORY_COLUMNS,
    SWEEP_COLUMNS,
    ResultWriter,
)


def _sweep_row(kappa: float) -> dict:
    return {
        "dataset": "mnist",
        "qubits": 4,
        "classes": 2,
        "layers": 2,
        "arithmetic": "affine",
        "loss": "margin",
        "epsilon": 0.001,
        "kappa": kappa,
        "test_acc": 0.95,
        "cert_acc": 0.9,
        "pgd_acc": 0.93,
        "seed": 7,
        "wall_time": 1.5,
    }


class TestWriting:
    def test_json_creates_parents(self, tmp_path):
        path = tmp_path / "a" / "b" / "report.json"
        ResultWriter.write_json(path, {"test_acc": 0.5})
        assert json.loads(path.read_text(encoding="utf-8")) == {"test_acc": 0.5}

    def test_csv_keeps_float_precision(self, tmp_path):
        path = tmp_path / "sweep.csv"
        row = _sweep_row(0.1 + 0.2)
        assert ResultWriter.write_csv(path, SWEEP_COLUMNS, [row]) == 1
        _, rows = ResultWriter.read_table(path, SWEEP_COLUMNS)
        assert float(rows[0]["kappa"]) == 0.1 + 0.2

    def test_append_writes_header_once(self, tmp_path):
        path = tmp_path / "history.csv"
        for epoch in range(3):
            row = dict.fromkeys(HISTORY_COLUMNS, 0.5) | {"epoch": epoch}
            ResultWriter.append_row(path, HISTORY_COLUMNS, row)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(HISTORY_COLUMNS)
        assert len(lines) == 4


class TestReading:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("", encoding="utf-8")
        assert ResultWriter.read_table(path, HISTORY_COLUMNS) == (
            list(HISTORY_COLUMNS),
            [],
        )

    def test_wrong_field_count_reports_line(self, tmp_path):
        path = tmp_path / "history.csv"
        path.write_text(
            ",".join(HISTORY_COLUMNS) + "\n0,1,0,0.5,0.5,0.5\n1,1,0\n",
            encoding="utf-8",
        )
        with pytest.raises(CsvFormatError) as exc_info:
            ResultWriter.read_table(path)
        assert exc_info.value.line == 3

    def test_non_numeric_metric_reports_line(self, tmp_path):
        path = tmp_path / "history.csv"
        path.write_text(
            ",".join(HISTORY_COLUMNS) + "\n0,1,0,high,0.5,0.5\n", encoding="utf-8"
        )
        with pytest.raises(CsvFormatError) as exc_info:
            ResultWriter.read_table(path)
        assert exc_info.value.line == 2

    def test_unexpected_header(self, tmp_path):
        path = tmp_path / "history.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        with pytest.raises(CsvFormatError):
            ResultWriter.read_table(path, HISTORY_COLUMNS)

    def test_detect_kind(self):
        assert ResultWriter.detect_kind(SWEEP_COLUMNS) == "sweep"
        assert ResultWriter.detect_kind(HISTORY_COLUMNS) == "history"
        assert ResultWriter.detect_kind([]) == "history"
        with pytest.raises(CsvFormatError):
            ResultWriter.detect_kind(["x"])


class TestPlotData:
    def test_sweep_rows_become_one_row_per_metric(self, tmp_path):
        # Given a three-row sweep
        source = tmp_path / "sweep.csv"
        rows = [_sweep_row(k) for k in (0.3, 0.5, 0.7)]
        ResultWriter.write_csv(source, SWEEP_COLUMNS, rows)

        # When reshaping it
        destination = tmp_path / "tidy.csv"
        count = ResultWriter.emit_plot_data(source, destination)

        # Then each row yields three (config..., metric, value) rows
        assert count == 9
        header, tidy = ResultWriter.read_table(destination)
        assert tuple(header) == (*CONFIG_COLUMNS, "metric", "value")
        assert [r["metric"] for r in tidy[:3]] == ["test_acc", "cert_acc", "pgd_acc"]
        assert tidy[1]["value"] == "0.9"

    def test_history_rows(self, tmp_path):
        source = tmp_path / "history.csv"
        row = {"epoch": 0, "kappa": 1.0, "epsilon": 0.0, "loss": 0.7}
        row |= {"clean_acc": 0.5, "cert_frac": 0.25}
        ResultWriter.write_csv(source, HISTORY_COLUMNS, [row])
        destination = tmp_path / "tidy.csv"
        assert ResultWriter.emit_plot_data(source, destination) == 3
        header, _ = ResultWriter.read_table(destination)
        assert header == ["epoch", "kappa", "epsilon", "metric", "value"]

    def test_empty_history_gives_header_only(self, tmp_path):
        source = tmp_path / "history.csv"
        source.write_text("", encoding="utf-8")
        destination = tmp_path / "tidy.csv"
        assert ResultWriter.emit_plot_data(source, destination) == 0
        assert destination.read_text(encoding="utf-8").strip() == (
            "epoch,kappa,epsilon,metric,value"
        )

    def test_explicit_kind_must_match_header(self, tmp_path):
        source = tmp_path / "sweep.csv"
        ResultWriter.write_csv(source, SWEEP_COLUMNS, [_sweep_row(0.5)])
        with pytest.raises(CsvFormatError):
            ResultWriter.emit_plot_data(source, tmp_path / "tidy.csv", "history")
