import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from src.utils import setup_logging
from src.config import Config
from src.aharmonic_lab import LabError, apply_overrides, load_scenario, run_scenario


def initialize_worker_logging() -> None:
    """Initializer for each worker process to set up its logging."""
    setup_logging(console_level=logging.ERROR)


def run_scenario_worker(
    scenario_path: str,
    output_dir: str,
    overrides: Optional[Dict[str, Any]] = None,
) -> Tuple[bool, str, Optional[Dict[str, Any]], Optional[str]]:
    """
    Worker function for running one scenario of a suite.

    Returns:
        Tuple of (success, scenario name, summary, error message).
        Success means the pipeline finished; failed verdicts still count as success.
    """
    name = Path(scenario_path).stem
    try:
        config = Config()
        scenario = apply_overrides(load_scenario(scenario_path, config), **(overrides or {}))
        name = scenario.name
        bundle = run_scenario(scenario, output_dir=output_dir, config=config)
        return True, name, bundle.summary(), None
    except LabError as e:
        return False, name, None, str(e)
    except Exception as e:
        logging.getLogger(__name__).exception(f"Непредвиденная ошибка в сценарии {name}")
        return False, name, None, f"{type(e).__name__}: {e}"
