import logging
import multiprocessing
import sys
from dataclasses import replace
from typing import Any, Dict, List, Optional

import click
from rich import traceback

from src.utils import setup_logging
from src.config import Config
from src.ui import display_welcome
from src.processing import run_check_model, run_identities, run_single, run_suite


# Better tracebacks
traceback.install(show_locals=False)


def _make_config(out: Optional[str], workers: Optional[int] = None,
                 cordes_samples: Optional[int] = None) -> Config:
    config = Config()
    if out:
        config = replace(config, output_dir=out)
    if workers is not None:
        config = replace(config, max_parallel_workers=workers)
    if cordes_samples is not None:
        config = replace(config, cordes_samples=cordes_samples)
    return config


def _overrides(grid: Optional[int], samples: Optional[int], tol: Optional[float],
               seed: Optional[int]) -> Dict[str, Any]:
    return {"grid": grid, "samples": samples, "tol": tol, "seed": seed}


def _parse_grids(_ctx, _param, value: Optional[str]) -> Optional[List[int]]:
    if value is None:
        return None
    try:
        grids = [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter("ожидается список целых чисел через запятую, например 64,128,256")
    if len(grids) < 2:
        raise click.BadParameter("нужно не меньше двух сеток")
    return grids


def _start(console_level: int = logging.INFO) -> None:
    setup_logging(console_level=console_level)
    display_welcome()


grid_option = click.option("--grid", type=click.IntRange(min=8), default=None,
                           help="Размер сетки n (n×n узлов), заменяет значение сценария.")
samples_option = click.option("--samples", type=click.IntRange(min=3), default=None,
                              help="Число уровней профиля.")
tol_option = click.option("--tol", type=click.FloatRange(min=0.0, min_open=True), default=None,
                          help="Допуск вердиктов.")
seed_option = click.option("--seed", type=int, default=None, help="Зерно генератора.")
out_option = click.option("--out", type=click.Path(file_okay=False), default=None,
                          help="Каталог результатов (по умолчанию output/).")


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli() -> None:
    """Численная проверка выпуклости длин линий уровня a-гармонических функций."""


@cli.command()
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
@grid_option
@samples_option
@tol_option
@seed_option
@out_option
def run(config_file: str, grid, samples, tol, seed, out) -> None:
    """Запустить один сценарий."""
    _start()
    config = _make_config(out)
    logging.getLogger(__name__).info(f"Запуск сценария {config_file}")
    sys.exit(run_single(config_file, config, _overrides(grid, samples, tol, seed)))


@cli.command()
@click.argument("directory", required=False, type=click.Path(file_okay=False))
@grid_option
@samples_option
@tol_option
@seed_option
@out_option
@click.option("--workers", type=click.IntRange(min=1), default=None,
              help="Число процессов (по умолчанию по числу ядер).")
def suite(directory: Optional[str], grid, samples, tol, seed, out, workers) -> None:
    """Запустить все сценарии каталога (по умолчанию configs/)."""
    _start()
    config = _make_config(out, workers=workers)
    stats = run_suite(directory or config.configs_dir, config, _overrides(grid, samples, tol, seed))
    sys.exit(stats.exit_code)


@cli.command("check-model")
@click.argument("model_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--cordes-samples", type=click.IntRange(min=1), default=None,
              help="Число случайных проб для условия Кордеса.")
@seed_option
@out_option
def check_model(model_file: str, cordes_samples, seed, out) -> None:
    """Проверить структурные условия модели и условие Кордеса."""
    _start()
    config = _make_config(out, cordes_samples=cordes_samples)
    sys.exit(run_check_model(model_file, config, cordes_samples, seed))


@cli.command()
@click.argument("chart_file", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--grids", callback=_parse_grids, default=None,
              help="Сетки для оценки порядка, например 64,128,256.")
@out_option
def identities(chart_file: Optional[str], grids, out) -> None:
    """Проверить дифференциальные тождества на последовательности сеток."""
    _start()
    config = _make_config(out)
    sys.exit(run_identities(chart_file, config, grids))


if __name__ == "__main__":
    # Required for Windows multiprocessing support
    multiprocessing.freeze_support()
    cli()
