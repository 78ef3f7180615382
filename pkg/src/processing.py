import logging
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from rich.panel import Panel
from rich.progress import Progress, BarColumn, TextColumn, TimeRemainingColumn, SpinnerColumn

from src.config import Config
from src.stats import SuiteStats, display_suite_statistics
from src.ui import console, display_error, display_identity_report, display_key_values, display_verdicts
from src.workers import initialize_worker_logging, run_scenario_worker
from src.aharmonic_lab import (
    ConfigError,
    DomainError,
    LabError,
    StageError,
    alternate_system_ratio,
    apply_overrides,
    conjugate_model,
    cordes_claim_sample,
    cordes_constants,
    cordes_discriminant_sample,
    find_scenarios,
    flux_map,
    invert_flux,
    load_scenario,
    model_from_spec,
    run_identity_suite,
    run_scenario,
    structure_report,
)
from src.aharmonic_lab.io_results import write_json
from src.aharmonic_lab.scenarios import read_document

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_NO_SCENARIOS = 2
EXIT_ERROR = 3


def run_single(scenario_path: str, config: Config, overrides: Dict[str, Any]) -> int:
    """Run one scenario and report it; returns the exit code."""
    try:
        scenario = apply_overrides(load_scenario(scenario_path, config), **overrides)
    except ConfigError as e:
        display_error("Ошибка конфигурации", str(e), f"Файл: {scenario_path}")
        logger.error(f"Не удалось загрузить сценарий {scenario_path}: {e}")
        return EXIT_ERROR

    try:
        with console.status(f"[cyan]Расчёт сценария {scenario.name}...[/cyan]", spinner="dots"):
            bundle = run_scenario(scenario, output_dir=config.output_dir, config=config)
    except StageError as e:
        display_error(f"Этап {e.stage}", str(e.cause), "Подробности в лог-файле logs/.")
        logger.error(f"Сценарий {scenario.name} прерван на этапе {e.stage}: {e.cause}")
        return EXIT_ERROR

    display_verdicts(scenario.name, [v.to_dict() for v in bundle.verdicts])
    complex_report = bundle.diagnostics.get("complex", {})
    display_key_values("🔎 Диагностика", {
        "Итераций решателя": bundle.solution.iterations,
        "Невязка решателя": bundle.solution.residual,
        "Перекрёстная проверка L'": bundle.diagnostics["cross_validation"]["L1_rel"],
        "Перекрёстная проверка L''": bundle.diagnostics["cross_validation"]["L2_rel"],
        "Тождество коплощади": bundle.diagnostics["coarea_identity"]["rel_error"],
        "min |∇u|": bundle.diagnostics["extremum"]["min_interior_gradient"],
        "sup(|a1|+|a2|)": complex_report.get("sup_bound", float("nan")),
    })
    console.print(f"[dim]Результаты: [blue]{bundle.output_dir}[/blue][/dim]")
    return bundle.exit_code


def _determine_max_workers(n_jobs: int, config: Config) -> int:
    if config.max_parallel_workers is not None:
        return max(1, min(n_jobs, config.max_parallel_workers))
    return max(1, min(n_jobs, multiprocessing.cpu_count()))


def _collect(stats: SuiteStats, result) -> None:
    success, name, summary, error_message = result
    if success:
        stats.add_summary(summary)
        failed = [verdict for verdict, status in summary["statuses"].items() if status == "fail"]
        marker = "[red]fail[/red]" if failed else "[green]ok[/green]"
        console.print(f"[dim]Завершено: [cyan]{name}[/cyan] {marker}[/dim]")
    else:
        stats.add_error(name, error_message)
        console.print(f"[dim]Ошибка: [red]{name}[/red][/dim]")
        logger.error(f"Сценарий {name} завершился ошибкой: {error_message}")


def run_suite(directory: str, config: Config, overrides: Dict[str, Any]) -> SuiteStats:
    """Run every scenario in ``directory``; results are written in name order."""
    stats = SuiteStats()
    try:
        paths = find_scenarios(directory, config)
    except ConfigError as e:
        display_error("Каталог сценариев", str(e))
        return stats
    stats.scenarios_found = len(paths)
    if not paths:
        console.print(Panel(
            f"[yellow]В каталоге '{directory}' не найдено сценариев ({', '.join(config.scenario_suffixes)}).[/yellow]",
            title="⚠️ Предупреждение",
            border_style="yellow"
        ))
        return stats

    max_workers = _determine_max_workers(len(paths), config)
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("[progress.percentage]{task.percentage:>3.0f}%"),
        TextColumn("({task.completed}/{task.total} сценариев)"),
        TimeRemainingColumn(),
        console=console,
        transient=False
    ) as progress:
        task = progress.add_task("Расчёт сценариев...", total=len(paths))
        if max_workers == 1:
            for path in paths:
                _collect(stats, run_scenario_worker(path, config.output_dir, overrides))
                progress.advance(task)
        else:
            console.print(f"[dim]Запуск параллельной обработки с {max_workers} процессами...[/dim]")
            with ProcessPoolExecutor(max_workers=max_workers, initializer=initialize_worker_logging) as executor:
                futures = {
                    executor.submit(run_scenario_worker, path, config.output_dir, overrides): path
                    for path in paths
                }
                for future in as_completed(futures):
                    path = futures[future]
                    try:
                        _collect(stats, future.result())
                    except Exception as e:
                        stats.add_error(Path(path).stem, f"{type(e).__name__}: {e}")
                        logger.error(f"Критическая ошибка при обработке {path}: {e}", exc_info=True)
                    finally:
                        progress.advance(task)

    os.makedirs(config.output_dir, exist_ok=True)
    write_json(os.path.join(config.output_dir, "suite_summary.json"), stats.to_payload())
    stats.frame().to_csv(os.path.join(config.output_dir, "suite_summary.csv"), index=False,
                         float_format="%.12g", lineterminator="\n")
    display_suite_statistics(stats)
    _log_suite_summary(stats)
    return stats


def _log_suite_summary(stats: SuiteStats) -> None:
    """Mirror the key numbers of the suite panel in the log files."""
    counts = stats.status_counts()
    lines = [
        f"Сценариев найдено: {stats.scenarios_found}",
        f"Выполнено без ошибок: {len(stats.summaries)}",
        f"pass/fail/n/a: {counts.get('pass', 0)}/{counts.get('fail', 0)}/{counts.get('not_applicable', 0)}",
        f"Код завершения: {stats.exit_code}",
    ]
    logger.info("\n".join(["Сводка набора:"] + lines))


def _flux_identity(model, config: Config) -> float:
    """max |F^-1(F(s)) - s|/s on a log grid inside the model's range."""
    s = np.logspace(-6, 2, 401)
    w = np.asarray(flux_map(model, s), dtype=float)
    keep = w < model.flux_sup * (1.0 - 1e-9)
    s, w = s[keep], w[keep]
    roundtrip = np.asarray(invert_flux(model, w, strict=False, config=config), dtype=float)
    return float(np.nanmax(np.abs(roundtrip - s) / s))


def _involution_gap(model) -> float:
    """Conjugating twice gives the model back; gap of a on a grid of speeds."""
    s = np.logspace(-3, 1, 161)
    s = s[np.asarray(flux_map(model, s), dtype=float) < model.flux_sup * (1.0 - 1e-6)]
    twice = conjugate_model(conjugate_model(model))
    original = np.asarray(model.value(s), dtype=float)
    return float(np.max(np.abs(np.asarray(twice.value(s), dtype=float) - original) / original))


def check_model(model_path: str, config: Config, samples: Optional[int] = None,
                seed: Optional[int] = None) -> Dict[str, Any]:
    """Structure, Cordes sampling and conjugation checks for one model file."""
    raw = read_document(model_path)
    spec = raw.get("model", raw) if isinstance(raw, dict) else raw
    try:
        model = model_from_spec(spec)
    except DomainError as e:
        raise ConfigError(f"'model' in {model_path}: {e}") from e

    structure = structure_report(model, config=config)
    payload: Dict[str, Any] = {
        "model": model.to_spec(),
        "structure": structure.to_dict(),
        "flux_roundtrip": _flux_identity(model, config),
        "conjugate_involution": _involution_gap(model),
        "alternate_ratio_max": float(np.max(alternate_system_ratio(np.linspace(-0.99, 10.0, 200)))),
    }
    try:
        constants = cordes_constants(model.alpha, model.beta, config=config)
    except DomainError as e:
        payload["cordes"] = {"skipped": str(e)}
    else:
        payload["cordes"] = {
            "constants": {"c1": constants.c1, "c2": constants.c2},
            "claim": cordes_claim_sample(constants, samples, seed, config).to_dict(),
            "discriminant": cordes_discriminant_sample(constants, samples, seed, config).to_dict(),
        }

    # D of the conjugate at F(s) is -D/(1 + D)
    s = np.linspace(0.1, 1.0, 64)
    conjugate = conjugate_model(model)
    D_a = np.asarray(model.elasticity_at(s), dtype=float)
    w = np.asarray(flux_map(model, s), dtype=float)
    D_b = np.asarray(conjugate.elasticity_at(w), dtype=float)
    payload["elasticity_duality"] = float(np.max(np.abs(D_b + D_a / (1.0 + D_a))))
    return payload


def run_check_model(model_path: str, config: Config, samples: Optional[int], seed: Optional[int]) -> int:
    try:
        with console.status("[cyan]Проверка модели...[/cyan]", spinner="dots"):
            payload = check_model(model_path, config, samples, seed)
    except LabError as e:
        display_error("Проверка модели", str(e), f"Файл: {model_path}")
        logger.error(f"Проверка модели {model_path} не удалась: {e}")
        return EXIT_ERROR

    structure = payload["structure"]
    display_key_values("🧪 Структура модели", {
        "alpha (оценка)": structure["alpha_hat"],
        "beta (оценка)": structure["beta_hat"],
        "Условие (A)": structure["holds_A"],
        "Условие (A')": structure["holds_Aprime"],
        "Класс A2": structure["A2_class"],
        "В пределах заявленных": structure["within_declared"],
        "F^-1(F(s)) - s": payload["flux_roundtrip"],
        "Двойное сопряжение": payload["conjugate_involution"],
    })
    cordes = payload["cordes"]
    if "skipped" not in cordes:
        display_key_values("📐 Условие Кордеса", {
            "c1": cordes["constants"]["c1"],
            "c2": cordes["constants"]["c2"],
            "Нарушений (утверждение)": cordes["claim"]["violations"],
            "Мин. запас (утверждение)": cordes["claim"]["worst_slack"],
            "Нарушений (дискриминант)": cordes["discriminant"]["violations"],
        })
    else:
        console.print(f"[yellow]Проверка Кордеса пропущена: {cordes['skipped']}[/yellow]")

    name = Path(model_path).stem
    write_json(os.path.join(config.output_dir, f"check_model_{name}.json"), payload)
    violations = 0 if "skipped" in cordes else cordes["claim"]["violations"] + cordes["discriminant"]["violations"]
    return EXIT_FAIL if violations or not structure["within_declared"] else EXIT_OK


def run_identities(chart_path: Optional[str], config: Config, grids: Optional[List[int]]) -> int:
    spec = None
    if chart_path:
        try:
            raw = read_document(chart_path)
        except ConfigError as e:
            display_error("Ошибка конфигурации", str(e))
            return EXIT_ERROR
        spec = raw.get("chart", raw) if isinstance(raw, dict) else None
        if spec is None:
            display_error("Ошибка конфигурации", f"{chart_path}: ожидается описание карты")
            return EXIT_ERROR
    try:
        with console.status("[cyan]Проверка тождеств...[/cyan]", spinner="dots"):
            report = run_identity_suite(spec, grids, config)
    except (LabError, ValueError) as e:
        display_error("Набор тождеств", str(e))
        logger.error(f"Набор тождеств не выполнен: {e}")
        return EXIT_ERROR

    display_identity_report(report)
    name = Path(chart_path).stem if chart_path else "patch"
    write_json(os.path.join(config.output_dir, f"identities_{name}.json"), report)
    return EXIT_OK
