"""Grid and sampling checks of the second-order identities.

Grid checks compose the chart's first-derivative operators, so every
identity is consistent to second order away from the edges. One-sided
edge stencils pollute one extra node per composition, which is why
residuals are read on an interior window whose width is a fixed fraction
of the chart.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.config import Config
from .chart import (
    build_chart,
    build_patch,
    closed_form_curvature,
    d_sigma,
    d_theta,
    gauss_curvature,
    gradient_inner,
    gradient_norm,
    riemannian_divergence,
    riemannian_gradient,
    riemannian_laplacian,
)
from .models import AnnulusChart, CordesConstants, CordesSampleReport, DomainError, LambdaKind, Topology, VectorField

logger = logging.getLogger(__name__)

CLAIM_TOL = 1e-12
QUADRATIC_GRID = 32


# ---------------------------------------------------------------------------
# Covariant Hessian
# ---------------------------------------------------------------------------

def covariant_hessian(chart: AnnulusChart, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Chart components (H_ss, H_st, H_tt) of the Hessian of w for g = mu^2 |dz|^2."""
    w_s, w_t = d_sigma(chart, w), d_theta(chart, w)
    phi_s, phi_t = d_sigma(chart, chart.log_mu), d_theta(chart, chart.log_mu)
    H_ss = d_sigma(chart, w_s) - phi_s * w_s + phi_t * w_t
    H_tt = d_theta(chart, w_t) + phi_s * w_s - phi_t * w_t
    H_st = 0.5 * (d_theta(chart, w_s) + d_sigma(chart, w_t)) - (phi_t * w_s + phi_s * w_t)
    return H_ss, H_st, H_tt


def hessian_norm_squared(chart: AnnulusChart, w: np.ndarray) -> np.ndarray:
    H_ss, H_st, H_tt = covariant_hessian(chart, w)
    return (H_ss ** 2 + 2.0 * H_st ** 2 + H_tt ** 2) / chart.mu ** 4


def hessian_determinant(chart: AnnulusChart, w: np.ndarray) -> np.ndarray:
    H_ss, H_st, H_tt = covariant_hessian(chart, w)
    return (H_ss * H_tt - H_st ** 2) / chart.mu ** 4


def _curvature(chart: AnnulusChart) -> np.ndarray:
    K = closed_form_curvature(chart)
    return gauss_curvature(chart) if K is None else K


def margin_nodes(n: int, config: Optional[Config] = None) -> int:
    if config is None:
        config = Config()
    return max(config.identity_margin, int(math.ceil(config.identity_margin_fraction * (n - 1))))


def _interior(chart: AnnulusChart, field: np.ndarray, margin: int) -> np.ndarray:
    rows = slice(margin, chart.n_sigma - margin)
    if chart.periodic:
        return field[rows]
    return field[rows, margin:chart.n_theta - margin]


def _normalized_max(chart: AnnulusChart, residual: np.ndarray, terms: Sequence[np.ndarray], margin: int) -> float:
    scale = max(float(np.max(_interior(chart, np.abs(t), margin))) for t in terms)
    return float(np.max(_interior(chart, np.abs(residual), margin))) / max(scale, np.finfo(float).tiny)


def _margin_for(chart: AnnulusChart, margin: Optional[int], config: Optional[Config]) -> int:
    return margin_nodes(min(chart.shape), config) if margin is None else margin


# ---------------------------------------------------------------------------
# Identities
# ---------------------------------------------------------------------------

def det_hess_identity_residual(chart: AnnulusChart, w: np.ndarray, margin: Optional[int] = None,
                               config: Optional[Config] = None) -> float:
    """Interior max of |det Hess w - (1/2 div(Delta w grad w) - 1/4 Delta|grad w|^2 + 1/2 K |grad w|^2)|.

    The curvature term vanishes on flat charts.
    """
    margin = _margin_for(chart, margin, config)
    lap = riemannian_laplacian(chart, w)
    grad = riemannian_gradient(chart, w)
    G2 = gradient_norm(chart, w) ** 2
    rhs = (0.5 * riemannian_divergence(chart, VectorField(lap * grad.d_sigma, lap * grad.d_theta))
           - 0.25 * riemannian_laplacian(chart, G2)
           + 0.5 * _curvature(chart) * G2)
    residual = hessian_determinant(chart, w) - rhs
    return float(np.max(_interior(chart, np.abs(residual), margin)))


def _floor_mask(chart: AnnulusChart, G: np.ndarray, margin: int, config: Config) -> np.ndarray:
    floor = config.gradient_floor_factor * float(np.max(_interior(chart, G, margin)))
    mask = G >= floor
    excluded = int(np.count_nonzero(~_interior(chart, mask, margin)))
    if excluded:
        logger.debug(f"Excluded {excluded} nodes below the gradient floor {floor:.3e}")
    return mask


def kato_defect(chart: AnnulusChart, u: np.ndarray, margin: Optional[int] = None,
                config: Optional[Config] = None) -> float:
    """|Hess u|^2 = 2 |grad |grad u||^2 for harmonic u, normalized by |Hess u|^2."""
    if config is None:
        config = Config()
    margin = _margin_for(chart, margin, config)
    G = gradient_norm(chart, u)
    mask = _floor_mask(chart, G, margin, config)
    lhs = hessian_norm_squared(chart, u)
    # 2 |grad G|^2 written through G^2, which stays polynomial for polynomial u
    rhs = gradient_norm(chart, G * G) ** 2 / (2.0 * np.where(mask, G, 1.0) ** 2)
    residual = np.where(mask, lhs - rhs, 0.0)
    return _normalized_max(chart, residual, [np.where(mask, lhs, 0.0), np.where(mask, rhs, 0.0)], margin)


def bochner_residual(chart: AnnulusChart, u: np.ndarray, margin: Optional[int] = None,
                     config: Optional[Config] = None) -> float:
    """1/2 Delta|grad u|^2 = <grad Delta u, grad u> + |Hess u|^2 + K |grad u|^2, normalized."""
    margin = _margin_for(chart, margin, config)
    G2 = gradient_norm(chart, u) ** 2
    lhs = 0.5 * riemannian_laplacian(chart, G2)
    terms = [
        gradient_inner(chart, riemannian_laplacian(chart, u), u),
        hessian_norm_squared(chart, u),
        _curvature(chart) * G2,
    ]
    return _normalized_max(chart, lhs - sum(terms), [lhs] + terms, margin)


def log_gradient_identity_residual(chart: AnnulusChart, u: np.ndarray, margin: Optional[int] = None,
                                   config: Optional[Config] = None) -> float:
    """Delta log|grad u| = div(Delta u / |grad u|^2 grad u) + K wherever grad u != 0."""
    if config is None:
        config = Config()
    margin = _margin_for(chart, margin, config)
    G = gradient_norm(chart, u)
    mask = _floor_mask(chart, G, margin, config)
    safe = np.where(mask, G, 1.0)
    lhs = riemannian_laplacian(chart, np.log(safe))
    weight = riemannian_laplacian(chart, u) / safe ** 2
    grad = riemannian_gradient(chart, u)
    flux = riemannian_divergence(chart, VectorField(weight * grad.d_sigma, weight * grad.d_theta))
    K = _curvature(chart)
    residual = np.where(mask, lhs - flux - K, 0.0)
    return _normalized_max(chart, residual, [np.where(mask, lhs, 0.0), np.where(mask, flux, 0.0), K], margin)


def refinement_order(errors: Sequence[float], grids: Sequence[int]) -> float:
    """Observed order p in error ~ n^-p, by a least-squares fit in log-log."""
    errors = np.asarray(errors, dtype=float)
    grids = np.asarray(grids, dtype=float)
    if errors.size != grids.size or errors.size < 2:
        raise DomainError("need at least two (grid, error) pairs")
    if np.any(errors <= 0.0) or not np.all(np.isfinite(errors)):
        return math.nan
    slope = np.polyfit(np.log(grids), np.log(errors), 1)[0]
    return float(-slope)


# ---------------------------------------------------------------------------
# Cordes-type algebra
# ---------------------------------------------------------------------------

def cordes_claim_slack(W: np.ndarray, a: np.ndarray, c1: float, c2: float) -> float:
    """c2 (sum a_ij w_ij)^2 - (sum w_ij^2 + 2 c1 det W) for one pair of matrices."""
    W = np.asarray(W, dtype=float)
    a = np.asarray(a, dtype=float)
    lhs = float(np.sum(W * W) + 2.0 * c1 * np.linalg.det(W))
    return c2 * float(np.sum(a * W)) ** 2 - lhs


def _chunks(n: int, size: int) -> List[int]:
    sizes = [size] * (n // size)
    if n % size:
        sizes.append(n % size)
    return sizes


def _claim_chunk(rng: np.random.Generator, count: int, constants: CordesConstants) -> Tuple[int, float]:
    w11, w22, w12 = rng.uniform(-10.0, 10.0, size=(3, count))
    angle = rng.uniform(0.0, 2.0 * math.pi, size=count)
    A = rng.uniform(constants.alpha - 1.0, constants.beta - 1.0, size=count)
    v1, v2 = np.cos(angle), np.sin(angle)
    trace = w11 + w22 + A * (v1 * v1 * w11 + 2.0 * v1 * v2 * w12 + v2 * v2 * w22)
    frobenius = w11 ** 2 + w22 ** 2 + 2.0 * w12 ** 2
    rhs = constants.c2 * trace ** 2
    slack = rhs - frobenius - 2.0 * constants.c1 * (w11 * w22 - w12 ** 2)
    normalized = slack / (frobenius + rhs)
    return int(np.count_nonzero(normalized < -CLAIM_TOL)), float(normalized.min())


def _discriminant_chunk(rng: np.random.Generator, count: int, constants: CordesConstants) -> Tuple[int, float]:
    # a = I + A v v^T has eigenvalues 1 and 1 + A; in its eigenframe (b11, b22) is one of the two orders
    b = rng.uniform(constants.alpha, constants.beta, size=count)
    swap = rng.random(count) < 0.5
    b11 = np.where(swap, 1.0, b)
    b22 = np.where(swap, b, 1.0)
    c1, c2 = constants.c1, constants.c2
    delta = c1 * c1 - 1.0 - c2 * (2.0 * c1 * b11 * b22 - b11 ** 2 - b22 ** 2)
    scale = c1 * c1 + c2 * (2.0 * c1 * b11 * b22 + b11 ** 2 + b22 ** 2)
    normalized = -delta / scale
    return int(np.count_nonzero(normalized < -CLAIM_TOL)), float(normalized.min())


def _sample(chunk: Callable, constants: CordesConstants, n: int, seed: int, config: Config) -> CordesSampleReport:
    if n < 1:
        raise DomainError("need at least one sample")
    sizes = _chunks(n, config.cordes_chunk)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    with ThreadPoolExecutor(max_workers=max(1, config.cordes_workers)) as executor:
        results = list(executor.map(lambda job: chunk(np.random.default_rng(job[0]), job[1], constants),
                                    zip(streams, sizes)))
    violations = sum(count for count, _ in results)
    worst = min(value for _, value in results)
    return CordesSampleReport(n_samples=n, violations=violations, worst_slack=worst, seed=seed)


def cordes_claim_sample(constants: CordesConstants, n: Optional[int] = None, seed: Optional[int] = None,
                        config: Optional[Config] = None) -> CordesSampleReport:
    """Random check of sum w_ij^2 + 2 c1 det W <= c2 (sum a_ij w_ij)^2.

    W is symmetric with entries in [-10, 10], v a random unit vector and
    a = I + A v v^T with A in [alpha - 1, beta - 1]. Slack is normalized
    by sum w_ij^2 + c2 (sum a_ij w_ij)^2.
    """
    if config is None:
        config = Config()
    n = config.cordes_samples if n is None else n
    seed = config.seed if seed is None else seed
    report = _sample(_claim_chunk, constants, n, seed, config)
    logger.debug(f"Cordes claim: {report.violations} violations in {n} samples, worst slack {report.worst_slack:.3e}")
    return report


def cordes_discriminant_sample(constants: CordesConstants, n: Optional[int] = None, seed: Optional[int] = None,
                               config: Optional[Config] = None) -> CordesSampleReport:
    """Random check that c1^2 - 1 - c2 (2 c1 b11 b22 - b11^2 - b22^2) <= 0.

    Reported slack is minus the discriminant over its scale, so it stays
    non-negative when the check holds.
    """
    if config is None:
        config = Config()
    n = config.cordes_samples if n is None else n
    seed = config.seed if seed is None else seed
    return _sample(_discriminant_chunk, constants, n, seed + 1, config)


# ---------------------------------------------------------------------------
# Suite
# ---------------------------------------------------------------------------

def _chart_for(spec: Mapping, n: int, config: Config) -> AnnulusChart:
    topology = Topology(spec.get("topology", Topology.PATCH.value))
    lambda_spec = spec.get("lambda", "flat")
    if topology == Topology.PATCH:
        return build_patch(spec.get("extent", config.patch_extent), n, n, lambda_spec)
    return build_chart(float(spec.get("R", 2.0)), n, n, lambda_spec, topology, spec.get("r_inner"), config)


def _test_fields(chart: AnnulusChart) -> Dict[str, np.ndarray]:
    z = chart.z
    x, y = z.real, z.imag
    return {
        "quartic": x ** 3 * y,
        "harmonic": (z ** 3).real,
        "generic": (z ** 3).real + 0.25 * np.abs(z) ** 2,
    }


def grid_residuals(chart: AnnulusChart, config: Optional[Config] = None) -> Dict[str, float]:
    fields = _test_fields(chart)
    return {
        "det_hess": det_hess_identity_residual(chart, fields["quartic"], config=config),
        "kato": kato_defect(chart, fields["harmonic"], config=config),
        "bochner": bochner_residual(chart, fields["generic"], config=config),
        "log_gradient": log_gradient_identity_residual(chart, fields["generic"], config=config),
    }


def quadratic_checks(extent: Sequence[float], config: Optional[Config] = None) -> Dict[str, float]:
    """Flat-patch residuals on quadratics, where every stencil is exact."""
    chart = build_patch(extent, QUADRATIC_GRID, QUADRATIC_GRID, "flat")
    x, y = chart.z.real, chart.z.imag
    saddle = x ** 2 - y ** 2
    return {
        "det_hess": det_hess_identity_residual(chart, x ** 2 + y ** 2, config=config),
        "det_hess_affine": det_hess_identity_residual(chart, 3.0 * x - 2.0 * y + 1.0, config=config),
        "kato": kato_defect(chart, saddle, config=config),
        "bochner": bochner_residual(chart, saddle, config=config),
    }


def run_identity_suite(chart_spec: Optional[Mapping] = None, grids: Optional[Sequence[int]] = None,
                       config: Optional[Config] = None) -> Dict[str, object]:
    """Residuals of every identity over a refinement sequence, with observed orders."""
    if config is None:
        config = Config()
    spec = dict(chart_spec or {"topology": Topology.PATCH.value, "lambda": "flat"})
    grids = tuple(int(n) for n in (grids or config.identity_grids))
    if len(grids) < 2 or list(grids) != sorted(set(grids)):
        raise DomainError(f"grids must be at least two increasing sizes, got {grids}")

    per_grid: List[Dict[str, float]] = []
    for n in grids:
        chart = _chart_for(spec, n, config)
        per_grid.append(grid_residuals(chart, config))
        logger.debug(f"Identity residuals on {n}x{n}: {per_grid[-1]}")

    names = list(per_grid[0])
    residuals = {name: [row[name] for row in per_grid] for name in names}
    orders = {name: refinement_order(values, grids) for name, values in residuals.items()}
    report: Dict[str, object] = {
        "chart": {key: (value.tolist() if isinstance(value, np.ndarray) else value) for key, value in spec.items()},
        "grids": list(grids),
        "residuals": residuals,
        "orders": orders,
    }
    flat = spec.get("lambda", "flat") == LambdaKind.FLAT.value
    if Topology(spec.get("topology", Topology.PATCH.value)) == Topology.PATCH and flat:
        report["quadratic"] = quadratic_checks(spec.get("extent", config.patch_extent), config)
    return report
