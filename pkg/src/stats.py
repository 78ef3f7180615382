import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List

import pandas as pd
from rich.panel import Panel
from rich.table import Table

from src.ui import console, STATUS_STYLES
from src.utils import format_duration, format_margin
from src.aharmonic_lab import VERDICT_NAMES


@dataclass
class SuiteStats:
    """Aggregate results of a suite run."""
    start_time: float = field(default_factory=time.time)
    scenarios_found: int = 0
    summaries: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    errors: Dict[str, str] = field(default_factory=dict)

    def add_summary(self, summary: Dict[str, Any]) -> None:
        self.summaries[summary["scenario"]] = summary

    def add_error(self, name: str, message: str) -> None:
        self.errors[name] = message

    def get_processing_time(self) -> float:
        return time.time() - self.start_time

    def status_counts(self) -> Counter:
        counts: Counter = Counter()
        for summary in self.summaries.values():
            counts.update(summary["statuses"].values())
        return counts

    @property
    def exit_code(self) -> int:
        """3 on any configuration or numerical failure, else 1 on any failed verdict, else 0."""
        if self.scenarios_found == 0:
            return 2
        if self.errors:
            return 3
        if any(summary["exit_code"] for summary in self.summaries.values()):
            return 1
        return 0

    def to_rows(self) -> List[Dict[str, Any]]:
        rows = []
        for name in sorted(set(self.summaries) | set(self.errors)):
            summary = self.summaries.get(name)
            row: Dict[str, Any] = {"scenario": name}
            if summary is None:
                row.update({"model": None, "error": self.errors[name]})
                row.update({verdict: "error" for verdict in VERDICT_NAMES})
            else:
                row.update({"model": summary["model"], "error": None})
                row.update({verdict: summary["statuses"].get(verdict, "skipped") for verdict in VERDICT_NAMES})
                row.update({f"{verdict}_margin": summary["margins"].get(verdict) for verdict in VERDICT_NAMES})
            rows.append(row)
        return rows

    def to_payload(self) -> Dict[str, Any]:
        return {
            "scenarios": self.to_rows(),
            "counts": dict(sorted(self.status_counts().items())),
            "errors": len(self.errors),
            "exit_code": self.exit_code,
        }

    def frame(self) -> pd.DataFrame:
        columns = ["scenario", "model", "error"] + list(VERDICT_NAMES) + [f"{v}_margin" for v in VERDICT_NAMES]
        return pd.DataFrame(self.to_rows(), columns=columns)


def _display_suite_table(stats: SuiteStats) -> None:
    table = Table(show_header=True, header_style="bold cyan")
    table.add_column("Сценарий", min_width=20)
    table.add_column("Модель", style="dim")
    for name in VERDICT_NAMES:
        table.add_column(name, justify="center")

    for row in stats.to_rows():
        cells = []
        for name in VERDICT_NAMES:
            status = row[name]
            style = STATUS_STYLES.get(status, "dim")
            margin = row.get(f"{name}_margin")
            text = status if margin is None else f"{status}\n{format_margin(margin)}"
            cells.append(f"[{style}]{text}[/{style}]")
        table.add_row(row["scenario"], row["model"] or "-", *cells)

    console.print(Panel(table, title="📊 Результаты набора сценариев", border_style="cyan"))


def _display_errors(stats: SuiteStats) -> None:
    if not stats.errors:
        return
    table = Table(show_header=True, header_style="bold red")
    table.add_column("№", width=3, justify="center")
    table.add_column("Сценарий", min_width=20)
    table.add_column("Ошибка", min_width=40)
    for i, (name, message) in enumerate(sorted(stats.errors.items()), 1):
        shown = message[:120] + "..." if len(message) > 120 else message
        table.add_row(str(i), name, shown)
    console.print(Panel(table, title=f"❌ Ошибки ({len(stats.errors)})", border_style="red"))


def display_suite_statistics(stats: SuiteStats) -> None:
    if not stats.summaries and not stats.errors:
        console.print("[yellow]Нет данных для отображения статистики.[/yellow]")
        return

    _display_suite_table(stats)
    _display_errors(stats)

    counts = stats.status_counts()
    summary = Table(show_header=False, box=None, padding=(0, 1))
    summary.add_column("Параметр", style="bold", width=28)
    summary.add_column("Значение", style="green")
    summary.add_row("Сценариев найдено:", str(stats.scenarios_found))
    summary.add_row("Выполнено без ошибок:", str(len(stats.summaries)))
    summary.add_row("Вердикты pass / fail / n/a:",
                    f"{counts.get('pass', 0)} / {counts.get('fail', 0)} / {counts.get('not_applicable', 0)}")
    summary.add_row("Время выполнения:", format_duration(stats.get_processing_time()))
    summary.add_row("Код завершения:", str(stats.exit_code))
    console.print(Panel(summary, title="🎯 Сводка", border_style="blue"))
    console.print()
