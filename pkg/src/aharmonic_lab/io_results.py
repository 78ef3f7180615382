"""Result files: profile CSV, JSON documents and field dumps.

Outputs are deterministic. JSON keys are sorted, NaN and infinities become
null, and nothing carries a timestamp.
"""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Mapping, Tuple

import numpy as np
import pandas as pd

from .models import AnnulusChart, DomainError, PROFILE_COLUMNS, Profile

logger = logging.getLogger(__name__)

GRID_MAGIC = b"ALGRID01"
FLOAT_FORMAT = "%.12g"


def _plain(value: Any) -> Any:
    """Converts numpy scalars and arrays to JSON-ready builtins, NaN to None."""
    if isinstance(value, Mapping):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return [_plain(item) for item in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Enum):
        return value.value
    return value


def to_json_text(payload: Mapping[str, Any]) -> str:
    return json.dumps(_plain(payload), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(path: str, payload: Mapping[str, Any]) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(to_json_text(payload))
    logger.debug(f"Wrote {path}")
    return path


def profile_frame(profile: Profile) -> pd.DataFrame:
    return pd.DataFrame(profile.rows(), columns=list(PROFILE_COLUMNS))


def write_profile_csv(path: str, profile: Profile) -> str:
    """Fixed column schema: t, L, L1_fd, L1_coarea, L2_fd, L2_coarea, k_int, k_int_GB, K_interior."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    profile_frame(profile).to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="nan", lineterminator="\n")
    logger.debug(f"Wrote {path}")
    return path


def read_profile_csv(path: str) -> pd.DataFrame:
    frame = pd.read_csv(path)
    if list(frame.columns) != list(PROFILE_COLUMNS):
        raise DomainError(f"{path} does not have the profile columns {PROFILE_COLUMNS}")
    return frame


def field_frame(chart: AnnulusChart, field: np.ndarray) -> pd.DataFrame:
    """Long table (sigma, theta, value), or (sigma, theta, re, im) for complex fields."""
    field = np.asarray(field)
    if field.shape != chart.shape:
        raise DomainError(f"field has shape {field.shape}, chart is {chart.shape}")
    sigma, theta = np.meshgrid(chart.sigma, chart.theta, indexing="ij")
    columns: Dict[str, np.ndarray] = {"sigma": sigma.ravel(), "theta": theta.ravel()}
    if np.iscomplexobj(field):
        columns["re"] = field.real.ravel()
        columns["im"] = field.imag.ravel()
    else:
        columns["value"] = field.ravel()
    return pd.DataFrame(columns)


def write_field_csv(path: str, chart: AnnulusChart, field: np.ndarray) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    field_frame(chart, field).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Wrote {path}")
    return path


@dataclass(frozen=True)
class GridDump:
    sigma: np.ndarray
    theta: np.ndarray
    values: np.ndarray


def write_grid(path: str, chart: AnnulusChart, field: np.ndarray) -> str:
    """Binary dump: magic, two little-endian uint32 sizes, then sigma, theta and the field as float64."""
    field = np.asarray(field, dtype="<f8")
    if field.shape != chart.shape:
        raise DomainError(f"field has shape {field.shape}, chart is {chart.shape}")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(GRID_MAGIC)
        handle.write(np.asarray(chart.shape, dtype="<u4").tobytes())
        handle.write(np.asarray(chart.sigma, dtype="<f8").tobytes())
        handle.write(np.asarray(chart.theta, dtype="<f8").tobytes())
        handle.write(np.ascontiguousarray(field).tobytes())
    logger.debug(f"Wrote {path}")
    return path


def read_grid(path: str) -> GridDump:
    with open(path, "rb") as handle:
        data = handle.read()
    if data[:len(GRID_MAGIC)] != GRID_MAGIC:
        raise DomainError(f"{path} is not a grid dump")
    offset = len(GRID_MAGIC)
    n_sigma, n_theta = (int(v) for v in np.frombuffer(data, dtype="<u4", count=2, offset=offset))
    offset += 8
    expected = offset + 8 * (n_sigma + n_theta + n_sigma * n_theta)
    if len(data) != expected:
        raise DomainError(f"{path} has {len(data)} bytes, expected {expected}")

    def take(count: int) -> Tuple[np.ndarray, int]:
        return np.frombuffer(data, dtype="<f8", count=count, offset=offset).copy(), offset + 8 * count

    sigma, offset = take(n_sigma)
    theta, offset = take(n_theta)
    values, offset = take(n_sigma * n_theta)
    return GridDump(sigma=sigma, theta=theta, values=values.reshape(n_sigma, n_theta))
