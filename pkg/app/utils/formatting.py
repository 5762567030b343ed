"""
Console, logging and table helpers for the CLI interface.
"""
import logging
from typing import Any, Dict, List, Optional, Sequence

from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table
from rich.text import Text
from tabulate import tabulate

console = Console()
err_console = Console(stderr=True)

LOGGER_NAMESPACE = "fringe_prover"


def get_logger(module_name: str) -> logging.Logger:
    """Logger under the package namespace, e.g. `fringe_prover.env` for `app.env`."""
    short = module_name.rsplit(".", 1)[-1]
    return logging.getLogger(f"{LOGGER_NAMESPACE}.{short}")


def configure_logging(verbosity: int = 0) -> None:
    """WARNING by default, INFO for -v, DEBUG for -vv; output goes to stderr."""
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    root = logging.getLogger(LOGGER_NAMESPACE)
    root.handlers.clear()
    root.addHandler(RichHandler(console=err_console, show_path=False, rich_tracebacks=True))
    root.setLevel(level)
    root.propagate = False


def format_reward(value: float) -> Text:
    """Color a return by sign."""
    text = f"{value:+.2f}"
    if value > 0:
        return Text(text, style="green")
    elif value < 0:
        return Text(text, style="red")
    return Text(text)


def format_percentage(value: Any, decimal_places: int = 1) -> str:
    """
    Format a fraction as a percentage string.

    Args:
        value: fraction to format (0.01 = 1%)
        decimal_places: digits after the point

    Returns:
        Formatted percentage string
    """
    if value is None:
        return "N/A"
    try:
        return f"{float(value) * 100:.{decimal_places}f}%"
    except (ValueError, TypeError):
        return str(value)


def format_mean(value: Optional[float]) -> str:
    return "N/A" if value is None else f"{value:.2f}"


def create_eval_table(results: Sequence[Dict[str, Any]], title: str = "Evaluation") -> Table:
    """One row per theorem: name, proved flag, steps used and proof length."""
    table = Table(title=title)
    table.add_column("Theorem", justify="left")
    table.add_column("Proved", justify="center")
    table.add_column("Steps", justify="right")
    table.add_column("Proof length", justify="right")
    table.add_column("Return", justify="right")

    for row in results:
        proved = row["proved"]
        table.add_row(
            row["name"],
            Text("yes", style="green") if proved else Text("no", style="red"),
            str(row["timesteps"]),
            str(row["proof_length"]) if proved else "-",
            format_reward(row.get("return", 0.0)),
        )
    return table


ABLATION_HEADERS = ["Strategy", "Proved", "Mean timesteps", "Mean proof length"]


def _ablation_cells(row: Dict[str, Any]) -> List[str]:
    return [
        row["strategy"],
        f"{row['proved']}/{row['total']}",
        format_mean(row.get("mean_timesteps")),
        format_mean(row.get("mean_proof_length")),
    ]


def create_ablation_table(rows: Sequence[Dict[str, Any]]) -> Table:
    table = Table(title="Strategy comparison")
    for i, header in enumerate(ABLATION_HEADERS):
        table.add_column(header, justify="left" if i == 0 else "right")
    for row in rows:
        table.add_row(*_ablation_cells(row))
    return table


def ablation_text(rows: Sequence[Dict[str, Any]], fmt: str = "github") -> str:
    """Plain-text rendering of the comparison for files and non-tty output."""
    return tabulate([_ablation_cells(r) for r in rows], headers=ABLATION_HEADERS, tablefmt=fmt)


def create_proof_panel(script_text: str, name: str, timesteps: int) -> Panel:
    return Panel(Text(script_text), title=f"Proof of {name}", subtitle=f"found in {timesteps} steps")


def print_error(message: str):
    """Print an error message."""
    err_console.print(f"[bold red]Error:[/bold red] {escape(message)}")


def print_warning(message: str):
    """Print a warning message."""
    err_console.print(f"[bold yellow]Warning:[/bold yellow] {escape(message)}")


def print_success(message: str):
    """Print a success message."""
    console.print(f"[bold green]Success:[/bold green] {escape(message)}")
