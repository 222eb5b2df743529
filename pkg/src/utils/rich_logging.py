"""Rich logging, console and progress helpers."""

from __future__ import annotations

import logging
from typing import Any, Self

from rich.console import Console
from rich.logging import RichHandler
from rich.progress import (
    BarColumn,
    MofNCompleteColumn,
    Progress,
    SpinnerColumn,
    TaskID,
    TaskProgressColumn,
    TextColumn,
    TimeElapsedColumn,
    TimeRemainingColumn,
)

_CONSOLE = Console()


def get_console() -> Console:
    """Return the shared console instance for rich output."""
    return _CONSOLE


def configure_logging(level: int | str = logging.INFO) -> None:
    """Configure logging to use RichHandler with the shared console.

    ``level`` may be a number or a level name such as ``"DEBUG"``.
    """
    if isinstance(level, str):
        resolved = logging.getLevelName(level.upper())
        if not isinstance(resolved, int):
            msg = f"Unknown log level: {level}"
            raise ValueError(msg)
        level = resolved
    logging.basicConfig(
        level=level,
        format="%(name)s: %(message)s",
        handlers=[
            RichHandler(
                console=get_console(),
                rich_tracebacks=True,
                markup=True,
                show_path=False,
            )
        ],
        force=True,
    )


class NoOpProgress:
    """Stand-in for :class:`rich.progress.Progress` when display is disabled."""

    def __enter__(self) -> Self:
        return self

    def __exit__(self, *_exc: object) -> None:
        return None

    def add_task(self, _description: str, **_kwargs: Any) -> TaskID:
        return TaskID(0)

    def update(self, _task_id: TaskID | None = None, **_kwargs: Any) -> None:
        """Silently ignore all progress updates."""

    def advance(self, _task_id: TaskID, _advance: float = 1) -> None:
        """Silently ignore all progress updates."""


def make_progress(*, enabled: bool = True) -> Progress | NoOpProgress:
    """Transient progress bar on the shared console, or a no-op."""
    if not enabled:
        return NoOpProgress()
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        TimeRemainingColumn(),
        console=get_console(),
        transient=True,
    )
