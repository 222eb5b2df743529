"""Tests for the sweep runner."""

import pytest

from src.core import sweep
from src.core.errors import SoundnessError
from src.core.run_config import RunConfig
from src.core.sweep import DatasetCache, SweepRunner, run_sweep
from src.utils.result_writer import SWEEP_COLUMNS, ResultWriter


@pytest.fixture
def base(idx_root, tmp_path) -> RunConfig:
    return RunConfig(
        data_root=str(idx_root),
        output_dir=str(tmp_path / "runs"),
        qubits=4,
        layers=1,
        epochs=2,
        warmup=1,
        ramp=1,
        batch_size=8,
        epsilon=0.001,
        train_limit=16,
        test_limit=8,
        attack_steps=2,
        sweep={"kappa": [0.5, 0.8]},
    )


def _without_time(rows):
    return [{k: v for k, v in row.items() if k != "wall_time"} for row in rows]


class TestSweepRunner:
    def test_rows_are_written_in_grid_order(self, base, tmp_path):
        # Given a two-row grid
        output = tmp_path / "sweep.csv"

        # When running it sequentially
        result = run_sweep(base, output, max_workers=1, show_progress=False)

        # Then both rows succeed and the CSV follows the grid
        assert (result.successes, result.failures) == (2, 0)
        header, rows = ResultWriter.read_table(output, SWEEP_COLUMNS)
        assert tuple(header) == SWEEP_COLUMNS
        assert [float(row["kappa"]) for row in rows] == [0.5, 0.8]
        for row in rows:
            assert 0.0 <= float(row["cert_acc"]) <= float(row["pgd_acc"])
            assert float(row["pgd_acc"]) <= float(row["test_acc"]) <= 1.0

    def test_parallel_matches_sequential(self, base):
        sequential = run_sweep(base, max_workers=1, show_progress=False)
        parallel = run_sweep(base, max_workers=2, show_progress=False)
        assert _without_time(parallel.rows) == _without_time(sequential.rows)

    @pytest.mark.parametrize("workers", [1, 2])
    def test_failed_row_is_skipped(self, base, monkeypatch, workers):
        real_run_row = sweep.run_row

        def flaky(row, train_set, test_set):
            if row.kappa == 0.5:
                msg = "boom"
                raise RuntimeError(msg)
            return real_run_row(row, train_set, test_set)

        monkeypatch.setattr(sweep, "run_row", flaky)
        result = run_sweep(base, max_workers=workers, show_progress=False)
        assert (result.successes, result.failures) == (1, 1)
        assert result.rows[0]["kappa"] == 0.8

    @pytest.mark.parametrize("workers", [1, 2])
    def test_soundness_violation_aborts(self, base, monkeypatch, workers):
        def unsound(*_args):
            msg = "certified sample flipped"
            raise SoundnessError(msg)

        monkeypatch.setattr(sweep, "run_row", unsound)
        with pytest.raises(SoundnessError):
            run_sweep(base, max_workers=workers, show_progress=False)

    def test_workers_default_to_config(self, base):
        assert SweepRunner(base, show_progress=False).max_workers == base.jobs


class TestDatasetCache:
    def test_rows_with_same_data_share_splits(self, base):
        cache = DatasetCache(prep_seed=1)
        first = cache.get(base, "train")
        assert cache.get(base.with_overrides({"kappa": 0.9}), "train") is first
        assert cache.get(base.with_overrides({"test_limit": 4}), "test") is not first
