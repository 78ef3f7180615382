"""Conformal charts and the Riemannian operators on them.

For g = mu^2 (d sigma^2 + d theta^2):

- grad_g u = mu^-2 (u_sigma, u_theta)
- div_g X = mu^-2 d_i(mu^2 X^i)
- Delta_g = div_g grad_g
- K = -mu^-2 Delta_0 log mu

First derivatives use second-order differences: central in the interior,
one-sided at non-periodic edges, and periodic wrap in theta for annuli.
"""
from __future__ import annotations

import logging
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid

from src.config import Config
from .models import (
    AnnulusChart,
    DomainError,
    FieldShapeError,
    InvalidMetricError,
    LambdaKind,
    LambdaSpec,
    Topology,
    VectorField,
)

logger = logging.getLogger(__name__)

MIN_NODES = 16


def _as_lambda_spec(spec: Union[str, LambdaSpec, dict, None]) -> LambdaSpec:
    if spec is None:
        return LambdaSpec()
    if isinstance(spec, LambdaSpec):
        return spec
    if isinstance(spec, str):
        return LambdaSpec(kind=LambdaKind(spec))
    if isinstance(spec, dict):
        values = spec.get("values")
        return LambdaSpec(
            kind=LambdaKind(spec.get("kind", "flat")),
            c=float(spec.get("c", 0.0)),
            values=None if values is None else np.asarray(values, dtype=float),
        )
    raise DomainError(f"cannot interpret lambda specification {spec!r}")


def lambda_values(spec: LambdaSpec, z: np.ndarray) -> np.ndarray:
    """Conformal factor lambda(z) of the planar metric lambda^2 |dz|^2."""
    r2 = np.abs(z) ** 2
    if spec.kind == LambdaKind.FLAT:
        return np.ones_like(r2)
    if spec.kind == LambdaKind.HYPERBOLIC_DISK:
        with np.errstate(divide="ignore"):
            return 2.0 / (1.0 - r2)
    if spec.kind == LambdaKind.GAUSSIAN_BUMP:
        return np.exp(spec.c * r2)
    if spec.kind == LambdaKind.SPHERICAL:
        return 2.0 / (1.0 + r2)
    if spec.kind == LambdaKind.USER:
        if spec.values is None:
            raise InvalidMetricError("user lambda needs sampled values")
        if spec.values.shape != z.shape:
            raise FieldShapeError(f"user lambda has shape {spec.values.shape}, chart needs {z.shape}")
        return np.asarray(spec.values, dtype=float)
    raise DomainError(f"unsupported lambda kind {spec.kind}")


def closed_form_curvature(chart: AnnulusChart) -> Optional[np.ndarray]:
    """Exact Gaussian curvature for builtin conformal factors, None for user ones."""
    kind = chart.lambda_spec.kind
    if kind == LambdaKind.FLAT:
        return np.zeros(chart.shape)
    if kind == LambdaKind.HYPERBOLIC_DISK:
        return np.full(chart.shape, -1.0)
    if kind == LambdaKind.GAUSSIAN_BUMP:
        c = chart.lambda_spec.c
        return -4.0 * c * np.exp(-2.0 * c * np.abs(chart.z) ** 2)
    if kind == LambdaKind.SPHERICAL:
        return np.ones(chart.shape)
    return None


def _validate_mu(mu: np.ndarray) -> None:
    if not np.all(np.isfinite(mu)) or np.any(mu <= 0.0):
        raise InvalidMetricError("conformal factor must be finite and positive on the whole grid")


def build_chart(R: float, n_sigma: int, n_theta: int,
                lambda_spec: Union[str, LambdaSpec, dict, None] = None,
                topology: Union[str, Topology] = Topology.ANNULUS_IN_DISK,
                r_inner: Optional[float] = None,
                config: Optional[Config] = None) -> AnnulusChart:
    """Periodic chart over sigma in [0, ln R], theta in [0, 2 pi).

    On ``annulus_in_disk`` the physical radius is r = r_inner e^sigma and
    mu = lambda(z) r. The hyperbolic annulus defaults to r_inner = 0.9/R
    so the outer circle stays inside the unit disk. A ``cylinder`` takes
    mu = lambda directly.
    """
    if config is None:
        config = Config()
    topology = Topology(topology)
    spec = _as_lambda_spec(lambda_spec)
    if topology == Topology.PATCH:
        raise DomainError("use build_patch for planar patches")
    if not R > 1.0:
        raise DomainError(f"annulus ratio R must exceed 1, got {R}")
    if n_sigma < MIN_NODES or n_theta < MIN_NODES:
        raise DomainError(f"grid must have at least {MIN_NODES} nodes per axis, got {n_sigma}x{n_theta}")

    sigma = np.linspace(0.0, math.log(R), n_sigma)
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta

    if topology == Topology.CYLINDER:
        if spec.kind not in (LambdaKind.FLAT, LambdaKind.USER):
            raise DomainError(f"cylinder charts take a flat or user lambda, got {spec.kind.value}")
        r0 = 1.0
        z = sigma[:, None] + 1j * theta[None, :]
        mu = lambda_values(spec, z)
    else:
        if r_inner is None:
            r0 = config.hyperbolic_outer_radius / R if spec.kind == LambdaKind.HYPERBOLIC_DISK else 1.0
        else:
            r0 = float(r_inner)
        if not r0 > 0.0:
            raise DomainError(f"inner radius must be positive, got {r0}")
        if spec.kind == LambdaKind.HYPERBOLIC_DISK and r0 * R >= 1.0:
            raise InvalidMetricError(f"hyperbolic annulus must stay inside the unit disk, outer radius {r0 * R:.4g}")
        z = r0 * np.exp(sigma[:, None] + 1j * theta[None, :])
        mu = lambda_values(spec, z) * np.abs(z)

    mu = np.asarray(mu, dtype=float)
    _validate_mu(mu)
    chart = AnnulusChart(R=float(R), sigma=sigma, theta=theta, mu=mu, topology=topology,
                         lambda_spec=spec, r_inner=r0)
    logger.debug(f"Built {topology.value} chart {n_sigma}x{n_theta}, R={R:.6g}, lambda={spec.kind.value}")
    return chart


def build_patch(extent: Sequence[float], n_x: int, n_y: int,
                lambda_spec: Union[str, LambdaSpec, dict, None] = None) -> AnnulusChart:
    """Non-periodic rectangle [x0, x1] x [y0, y1] with mu = lambda(x + iy)."""
    x0, x1, y0, y1 = (float(v) for v in extent)
    if not (x1 > x0 and y1 > y0):
        raise DomainError(f"degenerate patch extent {extent}")
    if n_x < MIN_NODES or n_y < MIN_NODES:
        raise DomainError(f"grid must have at least {MIN_NODES} nodes per axis, got {n_x}x{n_y}")
    spec = _as_lambda_spec(lambda_spec)
    x = np.linspace(x0, x1, n_x)
    y = np.linspace(y0, y1, n_y)
    mu = np.asarray(lambda_values(spec, x[:, None] + 1j * y[None, :]), dtype=float)
    _validate_mu(mu)
    return AnnulusChart(R=math.exp(x1 - x0), sigma=x, theta=y, mu=mu, topology=Topology.PATCH,
                        lambda_spec=spec, r_inner=1.0)


def check_field(chart: AnnulusChart, field: np.ndarray) -> np.ndarray:
    field = np.asarray(field)
    if field.shape != chart.shape:
        raise FieldShapeError(f"field has shape {field.shape}, chart is {chart.shape}")
    return field


# ---------------------------------------------------------------------------
# Difference operators
# ---------------------------------------------------------------------------

def d_sigma(chart: AnnulusChart, f: np.ndarray) -> np.ndarray:
    return np.gradient(f, chart.h_sigma, axis=0, edge_order=2)


def d_theta(chart: AnnulusChart, f: np.ndarray) -> np.ndarray:
    if chart.periodic:
        return (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)) / (2.0 * chart.h_theta)
    return np.gradient(f, chart.h_theta, axis=1, edge_order=2)


def _second_difference(f: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    """Compact three-point second derivative, second-order one-sided at open edges."""
    if periodic:
        return (np.roll(f, -1, axis=axis) - 2.0 * f + np.roll(f, 1, axis=axis)) / (h * h)
    f = np.moveaxis(f, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / (h * h)
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (h * h)
    out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / (h * h)
    return np.moveaxis(out, 0, axis)


def flat_laplacian(chart: AnnulusChart, f: np.ndarray) -> np.ndarray:
    """Delta_0 f with compact stencils."""
    return (_second_difference(f, chart.h_sigma, 0, False)
            + _second_difference(f, chart.h_theta, 1, chart.periodic))


def riemannian_gradient(chart: AnnulusChart, u: np.ndarray) -> VectorField:
    u = check_field(chart, u)
    inv_mu2 = chart.mu ** -2
    return VectorField(inv_mu2 * d_sigma(chart, u), inv_mu2 * d_theta(chart, u))


def riemannian_divergence(chart: AnnulusChart, X: VectorField) -> np.ndarray:
    mu2 = chart.mu ** 2
    check_field(chart, X.d_sigma)
    return (d_sigma(chart, mu2 * X.d_sigma) + d_theta(chart, mu2 * X.d_theta)) / mu2


def riemannian_laplacian(chart: AnnulusChart, u: np.ndarray) -> np.ndarray:
    return riemannian_divergence(chart, riemannian_gradient(chart, u))


def inner_product(chart: AnnulusChart, X: VectorField, Y: VectorField) -> np.ndarray:
    return chart.mu ** 2 * (X.d_sigma * Y.d_sigma + X.d_theta * Y.d_theta)


def gradient_inner(chart: AnnulusChart, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """<grad u, grad w>_g."""
    return (d_sigma(chart, u) * d_sigma(chart, w) + d_theta(chart, u) * d_theta(chart, w)) / chart.mu ** 2


def gradient_norm(chart: AnnulusChart, u: np.ndarray) -> np.ndarray:
    """|grad u|_g = mu^-1 |grad_0 u|."""
    u = check_field(chart, u)
    return np.hypot(d_sigma(chart, u), d_theta(chart, u)) / chart.mu


def gauss_curvature(chart: AnnulusChart) -> np.ndarray:
    return -flat_laplacian(chart, chart.log_mu) / chart.mu ** 2


def curvature_sign(K: np.ndarray, tol: float = 1e-6) -> str:
    """'nonpositive', 'positive' or 'mixed'."""
    if float(np.max(K)) <= tol:
        return "nonpositive"
    if float(np.min(K)) > tol:
        return "positive"
    return "mixed"


def area_integral(chart: AnnulusChart, f: np.ndarray) -> float:
    """Integral of f dA_g over the chart (trapezoid in sigma, periodic sum in theta)."""
    density = check_field(chart, f) * chart.mu ** 2
    if chart.periodic:
        return float(trapezoid(density, chart.sigma, axis=0).sum() * chart.h_theta)
    return float(trapezoid(trapezoid(density, chart.theta, axis=1), chart.sigma))


def stokes_defect(chart: AnnulusChart, u: np.ndarray) -> float:
    """Relative mismatch between the integral of Delta_g u and its boundary flux."""
    if not chart.periodic:
        raise DomainError("the Stokes check runs on periodic charts")
    interior = area_integral(chart, riemannian_laplacian(chart, u))
    u_s = d_sigma(chart, u)
    boundary = float((u_s[-1] - u_s[0]).sum() * chart.h_theta)
    scale = max(abs(boundary), float(np.abs(u_s).sum() * chart.h_theta), np.finfo(float).tiny)
    return abs(interior - boundary) / scale


def hole_curvature_integral(chart: AnnulusChart) -> float:
    """Integral of K dA over the disk the annulus leaves out (|z| < r_inner)."""
    if chart.topology != Topology.ANNULUS_IN_DISK:
        raise DomainError("hole integrals exist for annuli in a disk only")
    r0 = chart.r_inner
    kind = chart.lambda_spec.kind
    if kind == LambdaKind.FLAT:
        return 0.0
    if kind == LambdaKind.HYPERBOLIC_DISK:
        return -4.0 * math.pi * r0 * r0 / (1.0 - r0 * r0)
    if kind == LambdaKind.GAUSSIAN_BUMP:
        return -4.0 * chart.lambda_spec.c * math.pi * r0 * r0
    if kind == LambdaKind.SPHERICAL:
        return 4.0 * math.pi * r0 * r0 / (1.0 + r0 * r0)
    # Gauss-Bonnet on the disk: the inner circle has geodesic curvature
    # mu^-1 d_sigma log mu, so the enclosed curvature is 2 pi minus its integral.
    log_mu = chart.log_mu
    h = chart.h_sigma
    slope = (-3.0 * log_mu[0] + 4.0 * log_mu[1] - log_mu[2]) / (2.0 * h)
    return float(2.0 * math.pi - slope.sum() * chart.h_theta)
