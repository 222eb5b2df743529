"""Rich panels, tables and the overwrite confirmation used by the CLI."""

from collections.abc import Mapping, Sequence
from typing import Any

from rich.panel import Panel
from rich.prompt import Confirm
from rich.table import Table
from rich.text import Text

from src.utils.rich_logging import get_console

console = get_console()


def confirm_overwrite(file_path: str) -> bool:
    """Ask before replacing an existing model file.

    Args:
        file_path: Path of the file that would be overwritten.

    Returns:
        True if the user confirms, False otherwise.
    """
    message = Text()
    message.append(file_path, style="bold cyan")
    message.append(" already exists.", style="yellow")

    console.print(Panel(message, border_style="yellow", expand=False))

    return Confirm.ask(
        "[bold yellow]Overwrite it?[/bold yellow]",
        default=False,
        console=console,
    )


def should_overwrite(file_path: str, *, assume_yes: bool, interactive: bool) -> bool:
    """Whether a command may write over ``file_path``.

    Without a terminal there is nobody to ask, so the write goes ahead.
    """
    if assume_yes or not interactive:
        return True
    return confirm_overwrite(file_path)


def show_report(title: str, metrics: Mapping[str, Any]) -> None:
    """Print a two-column metric table inside a panel."""
    table = Table(show_header=False, box=None, pad_edge=False)
    table.add_column(style="bold cyan")
    table.add_column(justify="right")
    for name, value in metrics.items():
        shown = f"{value:.4f}" if isinstance(value, float) else str(value)
        table.add_row(name, shown)
    console.print(Panel(table, title=f"[bold]{title}[/bold]", expand=False))


def show_rows(
    title: str, columns: Sequence[str], rows: Sequence[Mapping[str, Any]]
) -> None:
    """Print result rows (for example a finished sweep) as a table."""
    table = Table(title=title)
    for column in columns:
        table.add_column(column, overflow="fold")
    for row in rows:
        table.add_row(
            *(
                f"{row[c]:.4f}" if isinstance(row[c], float) else str(row[c])
                for c in columns
            )
        )
    console.print(table)
