import logging
import math
from datetime import datetime
from pathlib import Path
from typing import Optional

import colorlog


class ScenarioLoggerAdapter(logging.LoggerAdapter):
    """Logger adapter that prefixes log messages with the scenario name."""

    def __init__(self, logger, scenario=None):
        self.scenario = scenario
        super().__init__(logger, {})

    def process(self, msg, kwargs):
        if self.scenario:
            return f"- {self.scenario} - {msg}", kwargs
        return msg, kwargs


def format_duration(seconds: float) -> str:
    """Длительность в виде '12.3с' или '4м 5с'."""
    if seconds < 60:
        return f"{seconds:.1f}с"
    minutes = int(seconds // 60)
    return f"{minutes}м {int(seconds % 60)}с"


def format_margin(margin: Optional[float]) -> str:
    if margin is None or not math.isfinite(margin):
        return "-"
    return f"{margin:+.3e}"


def setup_logging(output_dir=None, console_level=logging.INFO):
    """Настраивает логирование: цветной вывод в консоль и два файла в logs/.

    Args:
        output_dir: каталог, внутри которого создаётся logs/ (по умолчанию текущий)
        console_level: уровень сообщений в консоли
    """
    root_logger = logging.getLogger()
    if root_logger.hasHandlers():
        return root_logger

    log_format_plain = '%(asctime)s - %(levelname)s - [%(name)s] %(message)s'
    log_format_color = '%(log_color)s%(asctime)s - %(levelname)s - [%(name)s]%(reset)s %(message)s'
    date_format = '%Y-%m-%d %H:%M:%S'

    logs_dir = Path(output_dir) / "logs" if output_dir else Path("logs")
    logs_dir.mkdir(parents=True, exist_ok=True)
    timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')

    console_handler = colorlog.StreamHandler()
    console_handler.setFormatter(colorlog.ColoredFormatter(
        log_format_color,
        datefmt=date_format,
        reset=True,
        log_colors={
            'DEBUG': 'cyan',
            'INFO': 'green',
            'WARNING': 'yellow',
            'ERROR': 'red',
            'CRITICAL': 'red,bg_white',
        },
    ))
    console_handler.setLevel(console_level)

    plain_formatter = logging.Formatter(log_format_plain, date_format)
    main_file_handler = logging.FileHandler(logs_dir / f"log_{timestamp}.log", encoding='utf-8')
    main_file_handler.setFormatter(plain_formatter)
    main_file_handler.setLevel(logging.DEBUG)

    error_warning_handler = logging.FileHandler(logs_dir / f"errors_warnings_{timestamp}.log", encoding='utf-8')
    error_warning_handler.setFormatter(plain_formatter)
    error_warning_handler.setLevel(logging.WARNING)

    root_logger.setLevel(logging.DEBUG)
    root_logger.addHandler(console_handler)
    root_logger.addHandler(main_file_handler)
    root_logger.addHandler(error_warning_handler)
    return root_logger
