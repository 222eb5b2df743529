"""Tests for rich logging and progress integration."""

from __future__ import annotations

import logging
from unittest.mock import patch

import pytest
from rich.logging import RichHandler
from rich.progress import Progress

from src.core.evaluation import certify_dataset
from src.utils.rich_logging import (
    NoOpProgress,
    configure_logging,
    get_console,
    make_progress,
)


def test_configure_logging_uses_rich_handler():
    configure_logging()

    root_logger = logging.getLogger()
    rich_handlers = [
        handler for handler in root_logger.handlers if isinstance(handler, RichHandler)
    ]

    assert rich_handlers, "Expected RichHandler to be configured on root logger"
    assert rich_handlers[0].console is get_console()


def test_configure_logging_accepts_level_names():
    configure_logging("debug")
    assert logging.getLogger().level == logging.DEBUG
    configure_logging("WARNING")


def test_configure_logging_rejects_unknown_level():
    with pytest.raises(ValueError, match="Unknown log level"):
        configure_logging("chatty")


def test_make_progress_is_transient_on_shared_console():
    progress = make_progress()
    assert isinstance(progress, Progress)
    assert progress.console is get_console()
    assert progress.live.transient is True


def test_disabled_progress_ignores_updates():
    with make_progress(enabled=False) as progress:
        task = progress.add_task("work", total=3)
        progress.update(task, advance=1)
        progress.advance(task)
    assert isinstance(progress, NoOpProgress)


def test_certification_uses_shared_progress(toy_spec, toy_dataset):
    with patch("src.core.evaluation.make_progress", wraps=make_progress) as factory:
        certify_dataset(toy_spec, [0.0] * 4, toy_dataset, 0.01, show_progress=True)

        assert factory.call_count == 1
        assert factory.call_args.kwargs == {"enabled": True}
