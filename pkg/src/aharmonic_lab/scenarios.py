"""Scenario files: chart, model, boundary data and verdict selection.

A scenario is JSON or YAML with ``schema_version: 1``::

    name: flat_p2
    chart: {topology: annulus_in_disk, R: 2.0, lambda: flat}
    model: {name: p_harmonic, params: {p: 2}}
    boundary: {t1: 0.0, t2: 1.0}
"""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Tuple

import yaml

from src.config import Config
from .models import ConfigError, LambdaKind, Topology
from .verdicts import VERDICT_NAMES

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SOLVER_KEYS = ("scheme", "tol", "max_iter", "damping", "epsilon0", "epsilon_decay",
               "epsilon_interval", "epsilon_floor_ratio", "linear_tol", "line_search_steps")


@dataclass(frozen=True)
class ChartSpec:
    topology: str = Topology.ANNULUS_IN_DISK.value
    R: float = 2.0
    lambda_spec: Dict[str, Any] = field(default_factory=lambda: {"kind": LambdaKind.FLAT.value})
    r_inner: Optional[float] = None
    n_sigma: int = 128
    n_theta: int = 128

    def to_dict(self) -> Dict[str, Any]:
        return {
            "topology": self.topology,
            "R": self.R,
            "lambda": dict(self.lambda_spec),
            "r_inner": self.r_inner,
            "n_sigma": self.n_sigma,
            "n_theta": self.n_theta,
        }


@dataclass(frozen=True)
class Scenario:
    name: str
    chart: ChartSpec
    model: Dict[str, Any]
    t1: float
    t2: float
    n_samples: int = 17
    tol: float = 1e-3
    verdicts: Tuple[str, ...] = VERDICT_NAMES
    source: str = "coarea"
    pinched: Dict[str, Any] = field(default_factory=dict)
    solver: Dict[str, Any] = field(default_factory=dict)
    oracle: Optional[bool] = None
    complex_system: bool = True
    export_fields: bool = False
    seed: int = 0
    path: Optional[str] = field(default=None, compare=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "chart": self.chart.to_dict(),
            "model": dict(self.model),
            "boundary": {"t1": self.t1, "t2": self.t2},
            "samples": self.n_samples,
            "tol": self.tol,
            "verdicts": list(self.verdicts),
            "source": self.source,
            "pinched": dict(self.pinched),
            "solver": dict(self.solver),
            "oracle": self.oracle,
            "complex_system": self.complex_system,
            "export_fields": self.export_fields,
            "seed": self.seed,
        }


def _require(mapping: Mapping[str, Any], key: str, where: str) -> Any:
    if not isinstance(mapping, Mapping) or key not in mapping:
        raise ConfigError(f"missing key '{where}{key}'")
    return mapping[key]


def _number(value: Any, key: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"'{key}' must be a number, got {value!r}")
    try:
        number = float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"'{key}' must be a number, got {value!r}") from e
    if not math.isfinite(number):
        raise ConfigError(f"'{key}' must be finite, got {value!r}")
    return number


def _integer(value: Any, key: str) -> int:
    number = _number(value, key)
    if number != int(number):
        raise ConfigError(f"'{key}' must be an integer, got {value!r}")
    return int(number)


def _lambda_spec(raw: Any) -> Dict[str, Any]:
    if raw is None:
        return {"kind": LambdaKind.FLAT.value}
    if isinstance(raw, str):
        raw = {"kind": raw}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"'chart.lambda' must be a name or a mapping, got {raw!r}")
    kind = raw.get("kind", LambdaKind.FLAT.value)
    try:
        LambdaKind(kind)
    except ValueError as e:
        raise ConfigError(f"'chart.lambda.kind' is not one of {[k.value for k in LambdaKind]}: {kind!r}") from e
    if kind == LambdaKind.USER.value:
        raise ConfigError("'chart.lambda.kind' user needs sampled values, which scenario files do not carry")
    spec: Dict[str, Any] = {"kind": kind}
    if "c" in raw:
        spec["c"] = _number(raw["c"], "chart.lambda.c")
    return spec


def _chart(raw: Any, config: Config) -> ChartSpec:
    if not isinstance(raw, Mapping):
        raise ConfigError("'chart' must be a mapping")
    topology = raw.get("topology", Topology.ANNULUS_IN_DISK.value)
    if topology not in (Topology.ANNULUS_IN_DISK.value, Topology.CYLINDER.value):
        raise ConfigError(f"'chart.topology' must be annulus_in_disk or cylinder, got {topology!r}")
    grid = raw.get("grid")
    n_sigma = _integer(raw.get("n_sigma", grid if grid is not None else config.n_sigma), "chart.n_sigma")
    n_theta = _integer(raw.get("n_theta", grid if grid is not None else config.n_theta), "chart.n_theta")
    r_inner = raw.get("r_inner")
    return ChartSpec(
        topology=topology,
        R=_number(_require(raw, "R", "chart."), "chart.R"),
        lambda_spec=_lambda_spec(raw.get("lambda")),
        r_inner=None if r_inner is None else _number(r_inner, "chart.r_inner"),
        n_sigma=n_sigma,
        n_theta=n_theta,
    )


def _model(raw: Any) -> Dict[str, Any]:
    if not isinstance(raw, Mapping) or "name" not in raw:
        raise ConfigError("missing key 'model.name'")
    params = raw.get("params") or {}
    if not isinstance(params, Mapping):
        raise ConfigError("'model.params' must be a mapping")
    return {"name": str(raw["name"]), "params": dict(params)}


def _verdicts(raw: Any) -> Tuple[str, ...]:
    if raw is None:
        return VERDICT_NAMES
    if isinstance(raw, str) or not isinstance(raw, (list, tuple)):
        raise ConfigError("'verdicts' must be a list of names")
    unknown = [name for name in raw if name not in VERDICT_NAMES]
    if unknown:
        raise ConfigError(f"'verdicts' has unknown names {unknown}, expected a subset of {list(VERDICT_NAMES)}")
    return tuple(raw)


def _solver(raw: Any) -> Dict[str, Any]:
    if raw is None:
        return {}
    if not isinstance(raw, Mapping):
        raise ConfigError("'solver' must be a mapping")
    unknown = sorted(set(raw) - set(SOLVER_KEYS))
    if unknown:
        raise ConfigError(f"'solver' has unknown keys {unknown}")
    if "scheme" in raw and raw["scheme"] not in ("picard", "newton"):
        raise ConfigError(f"'solver.scheme' must be picard or newton, got {raw['scheme']!r}")
    return dict(raw)


def scenario_from_mapping(raw: Any, name: Optional[str] = None, config: Optional[Config] = None) -> Scenario:
    """Validate a parsed scenario document."""
    if config is None:
        config = Config()
    if not isinstance(raw, Mapping):
        raise ConfigError("scenario document must be a mapping")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"'schema_version' must be {SCHEMA_VERSION}, got {version!r}")
    boundary = _require(raw, "boundary", "")
    t1 = _number(_require(boundary, "t1", "boundary."), "boundary.t1")
    t2 = _number(_require(boundary, "t2", "boundary."), "boundary.t2")
    if not t1 < t2:
        raise ConfigError(f"'boundary' needs t1 < t2, got {t1} and {t2}")
    pinched = raw.get("pinched") or {}
    if not isinstance(pinched, Mapping):
        raise ConfigError("'pinched' must be a mapping")
    source = raw.get("source", "coarea")
    if source not in ("coarea", "fd"):
        raise ConfigError(f"'source' must be coarea or fd, got {source!r}")
    oracle = raw.get("oracle")
    return Scenario(
        name=str(raw.get("name") or name or "scenario"),
        chart=_chart(_require(raw, "chart", ""), config),
        model=_model(_require(raw, "model", "")),
        t1=t1,
        t2=t2,
        n_samples=_integer(raw.get("samples", config.n_samples), "samples"),
        tol=_number(raw.get("tol", config.verdict_tol), "tol"),
        verdicts=_verdicts(raw.get("verdicts")),
        source=source,
        pinched=dict(pinched),
        solver=_solver(raw.get("solver")),
        oracle=None if oracle is None else bool(oracle),
        complex_system=bool(raw.get("complex_system", True)),
        export_fields=bool(raw.get("export_fields", False)),
        seed=_integer(raw.get("seed", config.seed), "seed"),
    )


def read_document(path: str) -> Any:
    suffix = os.path.splitext(path)[1].lower()
    try:
        with open(path, "r", encoding="utf-8") as handle:
            if suffix == ".json":
                return json.load(handle)
            if suffix in (".yaml", ".yml"):
                return yaml.safe_load(handle)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    raise ConfigError(f"unsupported scenario format '{suffix}' for {path}")


def load_scenario(path: str, config: Optional[Config] = None) -> Scenario:
    stem = os.path.splitext(os.path.basename(path))[0]
    scenario = scenario_from_mapping(read_document(path), stem, config)
    logger.debug(f"Loaded scenario '{scenario.name}' from {path}")
    return replace(scenario, path=path)


def apply_overrides(scenario: Scenario, grid: Optional[int] = None, samples: Optional[int] = None,
                    tol: Optional[float] = None, seed: Optional[int] = None) -> Scenario:
    """CLI flags take precedence over scenario values."""
    chart = scenario.chart
    if grid is not None:
        chart = replace(chart, n_sigma=int(grid), n_theta=int(grid))
    return replace(
        scenario,
        chart=chart,
        n_samples=scenario.n_samples if samples is None else int(samples),
        tol=scenario.tol if tol is None else float(tol),
        seed=scenario.seed if seed is None else int(seed),
    )


def find_scenarios(directory: str, config: Optional[Config] = None) -> List[str]:
    """Scenario files directly inside ``directory``, sorted by name."""
    if config is None:
        config = Config()
    if not os.path.isdir(directory):
        raise ConfigError(f"scenario directory {directory} does not exist")
    suffixes = tuple(config.scenario_suffixes)
    return sorted(
        os.path.join(directory, entry) for entry in os.listdir(directory)
        if entry.lower().endswith(suffixes) and os.path.isfile(os.path.join(directory, entry))
    )
