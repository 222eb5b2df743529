"""Train-and-evaluate every row of a sweep grid and collect one results table.

Rows run sequentially when ``max_workers == 1`` and on a thread pool otherwise;
either way the CSV lists rows in grid order. A failed row is logged and
skipped, except a soundness violation, which aborts the sweep.
"""

from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from rich.progress import Progress, TaskID

from src import config
from src.core.dataset_io import PreparedDataset
from src.core.errors import SoundnessError
from src.core.evaluation import evaluate
from src.core.run_config import RunConfig, SweepGrid
from src.core.trainer import Trainer
from src.utils.result_writer import SWEEP_COLUMNS, ResultWriter
from src.utils.rich_logging import NoOpProgress, make_progress

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class SweepRunResult:
    successes: int
    failures: int
    duration_seconds: float
    rows: list[dict[str, Any]] = field(default_factory=list)


class DatasetCache:
    """Prepared splits shared across rows with the same data settings."""

    def __init__(self, prep_seed: int) -> None:
        self.prep_seed = prep_seed
        self._lock = threading.Lock()
        self._items: dict[tuple[Any, ...], PreparedDataset] = {}

    def get(self, row: RunConfig, split: str) -> PreparedDataset:
        limit = row.train_limit if split == "train" else row.test_limit
        key = (row.data_root, row.dataset, split, row.qubits, row.classes, limit)
        with self._lock:
            if key not in self._items:
                self._items[key] = row.load_split(split, seed=self.prep_seed)
            return self._items[key]


def run_row(
    row: RunConfig, train_set: PreparedDataset, test_set: PreparedDataset
) -> dict[str, Any]:
    """Train one configuration and return its sweep-table row."""
    start_time = time.perf_counter()
    spec = row.circuit_spec()
    result = Trainer(spec, row.train_config(), show_progress=False).train(train_set)
    report = evaluate(
        spec,
        result.params,
        test_set,
        row.epsilon,
        row.arithmetic,
        row.attack_config(),
        perturb_imag=row.perturb_imag,
    )
    return report.to_csv_row(
        {
            "dataset": row.dataset,
            "qubits": row.qubits,
            "classes": row.classes,
            "layers": row.layers,
            "loss": row.loss,
            "kappa": row.kappa,
            "seed": row.seed,
            "wall_time": round(time.perf_counter() - start_time, 3),
        }
    )


class SweepRunner:
    def __init__(
        self,
        base: RunConfig,
        *,
        max_workers: int | None = None,
        show_progress: bool = True,
    ) -> None:
        self.base = base
        self.grid = SweepGrid.from_mapping(base.sweep)
        self.max_workers = max(1, max_workers or base.jobs or config.MAX_WORKERS)
        self.show_progress = show_progress
        self.datasets = DatasetCache(prep_seed=base.seed)

    def _execute(self, index: int, row: RunConfig) -> dict[str, Any]:
        logger.info(
            "row=%d dataset=%s qubits=%d classes=%d layers=%d arithmetic=%s "
            "loss=%s epsilon=%g kappa=%g seed=%d",
            index,
            row.dataset,
            row.qubits,
            row.classes,
            row.layers,
            row.arithmetic,
            row.loss,
            row.epsilon,
            row.kappa,
            row.seed,
        )
        train_set = self.datasets.get(row, "train")
        test_set = self.datasets.get(row, "test")
        return run_row(row, train_set, test_set)

    def run(self, output_csv: str | Path | None = None) -> SweepRunResult:
        start_time = time.perf_counter()
        rows = list(self.grid.rows(self.base))
        logger.info("sweep rows=%d workers=%d", len(rows), self.max_workers)

        with make_progress(enabled=self.show_progress) as progress:
            task = progress.add_task(
                f"[cyan]Sweeping {len(rows)} rows", total=len(rows)
            )
            if self.max_workers == 1:
                results = self._run_sequential(rows, progress, task)
            else:
                results = self._run_parallel(rows, progress, task)

        ordered = [results[index] for index in sorted(results)]
        if output_csv is not None:
            ResultWriter.write_csv(output_csv, SWEEP_COLUMNS, ordered)
        duration = time.perf_counter() - start_time
        failures = len(rows) - len(ordered)
        logger.info(
            "sweep done: successes=%d, failures=%d, duration=%.2fs",
            len(ordered),
            failures,
            duration,
        )
        return SweepRunResult(
            successes=len(ordered),
            failures=failures,
            duration_seconds=duration,
            rows=ordered,
        )

    def _run_sequential(
        self, rows: list[RunConfig], progress: Progress | NoOpProgress, task: TaskID
    ) -> dict[int, dict[str, Any]]:
        results: dict[int, dict[str, Any]] = {}
        for index, row in enumerate(rows):
            try:
                results[index] = self._execute(index, row)
            except SoundnessError:
                raise
            except Exception:
                logger.exception("row=%d failed", index)
            progress.update(task, advance=1)
        return results

    def _run_parallel(
        self, rows: list[RunConfig], progress: Progress | NoOpProgress, task: TaskID
    ) -> dict[int, dict[str, Any]]:
        results: dict[int, dict[str, Any]] = {}
        future_to_row: dict[Future[dict[str, Any]], int] = {}
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            for index, row in enumerate(rows):
                future_to_row[executor.submit(self._execute, index, row)] = index
            for future in as_completed(future_to_row):
                index = future_to_row[future]
                try:
                    results[index] = future.result()
                except SoundnessError:
                    for pending in future_to_row:
                        pending.cancel()
                    raise
                except Exception:
                    logger.exception("row=%d raised exception", index)
                progress.update(task, advance=1)
        return results


def run_sweep(
    base: RunConfig,
    output_csv: str | Path | None = None,
    *,
    max_workers: int | None = None,
    show_progress: bool = True,
) -> SweepRunResult:
    runner = SweepRunner(base, max_workers=max_workers, show_progress=show_progress)
    return runner.run(output_csv)
