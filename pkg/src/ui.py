from typing import Any, Dict, Iterable, List, Mapping

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from src.utils import format_margin


# Single console instance for the whole app
console = Console()

STATUS_STYLES = {
    "pass": "green",
    "fail": "bold red",
    "not_applicable": "yellow",
    "skipped": "dim",
    "error": "red",
}


def display_welcome() -> None:
    """Display welcome screen with application info."""
    console.print(Panel.fit(
        "[bold magenta]Лаборатория a-гармонических функций[/bold magenta]\n\n"
        "[dim]Численная проверка выпуклости длин линий уровня\n"
        "для решений квазилинейных уравнений на поверхностях[/dim]",
        title="aharmonic-lab",
        border_style="bright_blue",
        padding=(1, 2)
    ))


def display_verdicts(name: str, verdicts: Iterable[Mapping[str, Any]]) -> None:
    table = Table(show_header=True, header_style="bold cyan")
    table.add_column("Вердикт", min_width=16)
    table.add_column("Статус", justify="center")
    table.add_column("Запас", justify="right")
    table.add_column("Невыполненные условия", style="dim")
    for verdict in verdicts:
        style = STATUS_STYLES.get(verdict["status"], "white")
        unmet = [key for key, ok in verdict["hypotheses_met"].items() if not ok]
        table.add_row(
            verdict["name"],
            f"[{style}]{verdict['status']}[/{style}]",
            format_margin(verdict["margin"]),
            ", ".join(unmet) or "-",
        )
    console.print(Panel(table, title=f"⚖️ Вердикты: {name}", border_style="cyan"))


def display_key_values(title: str, values: Mapping[str, Any], border_style: str = "blue") -> None:
    table = Table(show_header=False, box=None, padding=(0, 1))
    table.add_column("Параметр", style="bold", min_width=24)
    table.add_column("Значение", style="green")
    for key, value in values.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        table.add_row(str(key), str(value))
    console.print(Panel(table, title=title, border_style=border_style))


def display_identity_report(report: Mapping[str, Any]) -> None:
    grids: List[int] = list(report["grids"])
    table = Table(show_header=True, header_style="bold cyan")
    table.add_column("Тождество", min_width=14)
    for n in grids:
        table.add_column(f"{n}²", justify="right")
    table.add_column("Порядок", justify="right", style="bold")
    orders: Dict[str, float] = report["orders"]
    for name, values in report["residuals"].items():
        table.add_row(name, *(f"{v:.3e}" for v in values), f"{orders[name]:.2f}")
    console.print(Panel(table, title="🧮 Невязки тождеств", border_style="cyan"))
    if "quadratic" in report:
        display_key_values("Квадратичные поля (точные шаблоны)", report["quadratic"], "green")


def display_error(title: str, message: str, hint: str = "") -> None:
    body = f"[bold red]{message}[/bold red]"
    if hint:
        body += f"\n\n[dim]{hint}[/dim]"
    console.print(Panel(body, title=f"❌ {title}", border_style="red"))
