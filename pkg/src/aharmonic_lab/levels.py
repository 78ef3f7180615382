"""Level curves of a solution and the length profile L(t).

Curves come from marching squares on the theta-padded field. Pieces that
cross the theta seam are stitched back together, and theta is unwrapped
along each component. Line integrals use the midpoint rule with bilinear
interpolation of the integrand.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from functools import cached_property
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from skimage import measure

from src.config import Config
from .chart import (
    d_sigma,
    d_theta,
    gauss_curvature,
    gradient_norm,
    hole_curvature_integral,
    riemannian_laplacian,
)
from .models import (
    CriticalProximityError,
    DomainError,
    GaussBonnetCheck,
    LevelCurve,
    LevelError,
    Profile,
    ProfileContext,
    Solution,
    Topology,
)
from .operators import satisfies_minimal_growth
from .solver import gradient_floor

logger = logging.getLogger(__name__)


def chebyshev_levels(t1: float, t2: float, n: int, margin: float) -> np.ndarray:
    """First-kind Chebyshev nodes on [t1 + m, t2 - m], m = margin (t2 - t1), ascending."""
    pad = margin * (t2 - t1)
    lo, hi = t1 + pad, t2 - pad
    k = np.arange(n)
    nodes = np.cos((2.0 * k + 1.0) * math.pi / (2.0 * n))[::-1]
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes


def _stitch(pieces: List[np.ndarray], n_theta: int, tol: float) -> List[Tuple[np.ndarray, bool, int]]:
    """Join contour pieces that meet across the seam columns 0 and n_theta.

    Returns (points, closed, winding) per component, points in (row, col)
    with the column unwrapped.
    """
    components: List[Tuple[np.ndarray, bool, int]] = []
    open_pieces: List[np.ndarray] = []
    for piece in pieces:
        if piece.shape[0] > 2 and np.allclose(piece[0], piece[-1], atol=tol):
            components.append((piece, True, 0))
        else:
            open_pieces.append(piece)

    while open_pieces:
        current = open_pieces.pop(0)
        offset = 0.0
        closed, winding = False, 0
        while True:
            start, end = current[0], current[-1]
            shift = end[1] - start[1]
            turns = int(round(shift / n_theta))
            if abs(end[0] - start[0]) <= tol and abs(shift - turns * n_theta) <= tol and current.shape[0] > 2:
                closed, winding = True, turns
                break
            local = end[1] - offset
            if abs(local - n_theta) <= tol:
                target, next_offset = 0.0, offset + n_theta
            elif abs(local) <= tol:
                target, next_offset = float(n_theta), offset - n_theta
            else:
                break
            match = None
            for index, candidate in enumerate(open_pieces):
                for oriented in (candidate, candidate[::-1]):
                    if abs(oriented[0][0] - end[0]) <= tol and abs(oriented[0][1] - target) <= tol:
                        match = (index, oriented)
                        break
                if match is not None:
                    break
            if match is None:
                break
            index, oriented = match
            open_pieces.pop(index)
            shifted = oriented.copy()
            shifted[:, 1] += next_offset
            current = np.vstack([current, shifted[1:]])
            offset = next_offset
        components.append((current, closed, winding))
    return components


class LevelAnalyzer:
    """Per-solution fields used by every level-set operation.

    The fields are computed once and reused across all sampled levels.
    """

    def __init__(self, solution: Solution, config: Optional[Config] = None):
        self.solution = solution
        self.chart = solution.chart
        self.config = config or Config()
        self.floor = gradient_floor(solution, self.config)

    # --- fields -------------------------------------------------------------

    @cached_property
    def G(self) -> np.ndarray:
        return gradient_norm(self.chart, self.solution.u)

    @cached_property
    def _safe_G(self) -> np.ndarray:
        return np.maximum(self.G, np.finfo(float).tiny)

    @cached_property
    def _u_derivatives(self) -> Tuple[np.ndarray, np.ndarray]:
        return d_sigma(self.chart, self.solution.u), d_theta(self.chart, self.solution.u)

    @cached_property
    def _G_derivatives(self) -> Tuple[np.ndarray, np.ndarray]:
        return d_sigma(self.chart, self.G), d_theta(self.chart, self.G)

    @cached_property
    def K(self) -> np.ndarray:
        return gauss_curvature(self.chart)

    @cached_property
    def laplacian(self) -> np.ndarray:
        return riemannian_laplacian(self.chart, self.solution.u)

    @cached_property
    def _u_dot_G(self) -> np.ndarray:
        """<grad u, grad G>_g."""
        u_s, u_t = self._u_derivatives
        G_s, G_t = self._G_derivatives
        return (u_s * G_s + u_t * G_t) / self.chart.mu ** 2

    @cached_property
    def elasticity(self) -> np.ndarray:
        return np.asarray(self.solution.model.elasticity_at(self._safe_G), dtype=float)

    @cached_property
    def first_geometric(self) -> np.ndarray:
        G = self._safe_G
        return self.laplacian / G ** 2 - self._u_dot_G / G ** 3

    @cached_property
    def first_model(self) -> np.ndarray:
        G = self._safe_G
        return -self._u_dot_G / G ** 3 * (1.0 + self.elasticity)

    def _second(self, laplacian: np.ndarray) -> np.ndarray:
        chart = self.chart
        G = self._safe_G
        w = 1.0 / G
        w_s, w_t = d_sigma(chart, w), d_theta(chart, w)
        u_s, u_t = self._u_derivatives
        G_s, G_t = self._G_derivatives
        P = laplacian / G ** 2
        inner = (P * (w_s * u_s + w_t * u_t) - (w_s * G_s + w_t * G_t) / G) / chart.mu ** 2
        return inner / G - self.K / G ** 2

    @cached_property
    def second_geometric(self) -> np.ndarray:
        return self._second(self.laplacian)

    @cached_property
    def second_model(self) -> np.ndarray:
        return self._second(-self.elasticity * self._u_dot_G / self._safe_G)

    @cached_property
    def curvature(self) -> np.ndarray:
        """k = -div_g(grad u / |grad u|_g)."""
        chart = self.chart
        u_s, u_t = self._u_derivatives
        G = self._safe_G
        return -(d_sigma(chart, u_s / G) + d_theta(chart, u_t / G)) / chart.mu ** 2

    # --- sampling -----------------------------------------------------------

    def _padded(self, field: np.ndarray) -> Tuple[Tuple[np.ndarray, np.ndarray], np.ndarray]:
        chart = self.chart
        if chart.periodic:
            theta = np.append(chart.theta, 2.0 * math.pi)
            return (chart.sigma, theta), np.concatenate([field, field[:, :1]], axis=1)
        return (chart.sigma, chart.theta), field

    def sampler(self, field: np.ndarray) -> RegularGridInterpolator:
        axes, values = self._padded(field)
        return RegularGridInterpolator(axes, values, method="linear", bounds_error=False, fill_value=None)

    @cached_property
    def _mu_sampler(self) -> RegularGridInterpolator:
        return self.sampler(self.chart.mu)

    def _wrap(self, points: np.ndarray) -> np.ndarray:
        if not self.chart.periodic:
            return points
        wrapped = points.copy()
        wrapped[:, 1] = np.mod(wrapped[:, 1], 2.0 * math.pi)
        return wrapped

    def _segments(self, curve: LevelCurve):
        for points in curve.components:
            if points.shape[0] < 2:
                continue
            mid = self._wrap(0.5 * (points[1:] + points[:-1]))
            lengths = np.hypot(np.diff(points[:, 0]), np.diff(points[:, 1]))
            yield mid, lengths * self._mu_sampler(mid)

    # --- operations ---------------------------------------------------------

    def extract(self, t: float) -> LevelCurve:
        solution = self.solution
        if not solution.t1 < t < solution.t2:
            raise LevelError(f"level {t} must lie strictly between {solution.t1} and {solution.t2}")
        chart = self.chart
        _, image = self._padded(solution.u)
        pieces = measure.find_contours(image, level=t)
        if not pieces:
            raise LevelError(f"no level set found at t={t}")
        if chart.periodic:
            joined = _stitch(pieces, chart.n_theta, self.config.contour_match_tol)
        else:
            joined = [(p, bool(np.allclose(p[0], p[-1])), 0) for p in pieces]
        joined.sort(key=lambda item: -item[0].shape[0])

        components, closed, winding = [], [], []
        for points, is_closed, turns in joined:
            sigma = np.interp(points[:, 0], np.arange(chart.n_sigma), chart.sigma)
            theta = points[:, 1] * chart.h_theta if chart.periodic else np.interp(
                points[:, 1], np.arange(chart.n_theta), chart.theta)
            components.append(np.column_stack([sigma, theta]))
            closed.append(is_closed)
            winding.append(turns)
        return LevelCurve(t=float(t), components=tuple(components), closed=tuple(closed), winding=tuple(winding))

    def length(self, curve: LevelCurve) -> float:
        return float(sum(weights.sum() for _, weights in self._segments(curve)))

    def line_integral(self, curve: LevelCurve, field: np.ndarray, guard: bool = True) -> float:
        """Integral of a field over the curve with respect to g-arclength."""
        if guard:
            self._check_gradient(curve)
        sample = self.sampler(field)
        return float(sum((sample(mid) * weights).sum() for mid, weights in self._segments(curve)))

    def _check_gradient(self, curve: LevelCurve) -> None:
        sample = self.sampler(self.G)
        lowest = min(float(sample(mid).min()) for mid, _ in self._segments(curve))
        if lowest < self.floor:
            raise CriticalProximityError(f"level t={curve.t:.6g} passes near a critical point", lowest, self.floor)

    def first_derivative(self, t: float, route: str = "geometric") -> float:
        field = self.first_geometric if route == "geometric" else self.first_model
        return self.line_integral(self.extract(t), field)

    def second_derivative(self, t: float, route: str = "geometric") -> float:
        field = self.second_geometric if route == "geometric" else self.second_model
        return self.line_integral(self.extract(t), field)

    def curvature_integral(self, curve: LevelCurve, convention: str = "signed") -> float:
        value = self.line_integral(curve, self.curvature)
        return -value if convention == "gauss_bonnet" else value

    def interior_curvature_integral(self, t: float) -> float:
        """Integral of K dA_g over the part of the chart where u < t.

        Each theta column is integrated along sigma with u and K mu^2 linear
        between nodes, clipped at the crossing.
        """
        chart = self.chart
        u = self.solution.u
        density = self.K * chart.mu ** 2
        u0, u1 = u[:-1], u[1:]
        f0, f1 = density[:-1], density[1:]
        below0, below1 = u0 < t, u1 < t
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.clip((t - u0) / (u1 - u0), 0.0, 1.0)
        fx = f0 + x * (f1 - f0)
        full = below0 & below1
        head = below0 & ~below1
        tail = ~below0 & below1
        cell = np.where(full, 0.5 * (f0 + f1), 0.0)
        cell = np.where(head, x * 0.5 * (f0 + fx), cell)
        cell = np.where(tail, (1.0 - x) * 0.5 * (fx + f1), cell)
        return float(cell.sum() * chart.h_sigma * chart.h_theta)

    def gauss_bonnet(self, t: float) -> GaussBonnetCheck:
        if self.chart.topology != Topology.ANNULUS_IN_DISK:
            return GaussBonnetCheck(lhs=math.nan, rhs=math.nan, rel_error=math.nan, applicable=False)
        curve = self.extract(t)
        lhs = self.curvature_integral(curve, "gauss_bonnet")
        enclosed = hole_curvature_integral(self.chart) + self.interior_curvature_integral(t)
        rhs = 2.0 * math.pi - enclosed
        return GaussBonnetCheck(lhs=lhs, rhs=rhs, rel_error=abs(lhs - rhs) / max(abs(rhs), 2.0 * math.pi))

    def coarea_identity(self) -> Dict[str, float]:
        """Integral of L over [t1, t2] against the integral of |grad u|_g dA_g."""
        solution = self.solution
        nodes, weights = leggauss(self.config.coarea_nodes)
        half = 0.5 * (solution.t2 - solution.t1)
        levels = solution.t1 + half * (nodes + 1.0)
        lhs = half * float(sum(w * self.length(self.extract(t)) for t, w in zip(levels, weights)))
        density = self.G * self.chart.mu ** 2
        rhs = float(trapezoid(density, self.chart.sigma, axis=0).sum() * self.chart.h_theta)
        return {"lhs": lhs, "rhs": rhs, "rel_error": abs(lhs - rhs) / abs(rhs)}

    def context(self) -> ProfileContext:
        solution = self.solution
        model = solution.model
        G = self.G
        s_lo, s_hi = float(G.min()), float(G.max())
        span = np.linspace(max(s_lo, np.finfo(float).tiny), s_hi, 257)
        D = np.asarray(model.elasticity_at(span), dtype=float)
        cap = float(model.params.get("cap", 1.0)) if model.name == "maximal_lorentz" else 1.0
        return ProfileContext(
            model_name=model.name,
            alpha=model.alpha,
            beta=model.beta,
            topology=self.chart.topology,
            curvature_max=float(self.K.max()),
            curvature_min=float(self.K.min()),
            gradient_min=s_lo,
            gradient_max=s_hi,
            alpha_realized=float((1.0 + D).min()),
            beta_realized=float((1.0 + D).max()),
            minimal_growth=satisfies_minimal_growth(model, span, self.config.structure_tol),
            spacelike_cap=cap,
        )

    def sample(self, t: float) -> Dict[str, float]:
        curve = self.extract(t)
        if not curve.is_simple_closed:
            logger.warning(f"Level t={t:.6g} has {curve.n_components} components")
        signed = self.curvature_integral(curve)
        return {
            "L": self.length(curve),
            "L1_coarea": self.line_integral(curve, self.first_geometric),
            "L2_coarea": self.line_integral(curve, self.second_geometric),
            "L1_model": self.line_integral(curve, self.first_model),
            "L2_model": self.line_integral(curve, self.second_model),
            "k_int": signed,
            "k_int_GB": -signed,
            "K_interior": (self.interior_curvature_integral(t)
                           if self.chart.topology == Topology.ANNULUS_IN_DISK else math.nan),
        }


def extract_level(solution: Solution, t: float, config: Optional[Config] = None) -> LevelCurve:
    return LevelAnalyzer(solution, config).extract(t)


def curve_length(solution: Solution, curve: LevelCurve) -> float:
    return LevelAnalyzer(solution).length(curve)


def coarea_L_prime(solution: Solution, t: float, route: str = "geometric", config: Optional[Config] = None) -> float:
    return LevelAnalyzer(solution, config).first_derivative(t, route)


def coarea_L_double_prime(solution: Solution, t: float, route: str = "geometric",
                          config: Optional[Config] = None) -> float:
    return LevelAnalyzer(solution, config).second_derivative(t, route)


def curvature_integral(solution: Solution, level: Union[float, LevelCurve], convention: str = "signed",
                       config: Optional[Config] = None) -> float:
    """Integral of the level-curve curvature over {u = t}; an extracted curve is accepted too."""
    analyzer = LevelAnalyzer(solution, config)
    curve = level if isinstance(level, LevelCurve) else analyzer.extract(float(level))
    return analyzer.curvature_integral(curve, convention)


def gauss_bonnet_check(solution: Solution, t: float, config: Optional[Config] = None) -> GaussBonnetCheck:
    return LevelAnalyzer(solution, config).gauss_bonnet(t)


def coarea_identity(solution: Solution, config: Optional[Config] = None) -> Dict[str, float]:
    return LevelAnalyzer(solution, config).coarea_identity()


def build_profile(solution: Solution, n_samples: Optional[int] = None,
                  config: Optional[Config] = None) -> Profile:
    """Sample L and its derivatives at Chebyshev levels away from the boundary."""
    if config is None:
        config = Config()
    n = config.n_samples if n_samples is None else int(n_samples)
    if n < config.min_samples:
        raise DomainError(f"a profile needs at least {config.min_samples} samples, got {n}")
    analyzer = LevelAnalyzer(solution, config)
    levels = chebyshev_levels(solution.t1, solution.t2, n, config.end_margin)
    # warm the shared fields before any worker thread touches them
    for name in ("G", "first_geometric", "second_geometric", "first_model", "second_model", "curvature"):
        getattr(analyzer, name)

    if config.profile_workers > 1:
        with ThreadPoolExecutor(max_workers=config.profile_workers) as executor:
            samples = list(executor.map(analyzer.sample, levels))
    else:
        samples = [analyzer.sample(t) for t in levels]

    def column(key: str) -> np.ndarray:
        return np.array([sample[key] for sample in samples])

    L = column("L")
    spline = CubicSpline(levels, L)
    profile = Profile(
        t=levels,
        L=L,
        L1_fd=spline(levels, 1),
        L1_coarea=column("L1_coarea"),
        L2_fd=spline(levels, 2),
        L2_coarea=column("L2_coarea"),
        k_integral=column("k_int"),
        k_integral_gb=column("k_int_GB"),
        interior_K=column("K_interior"),
        context=analyzer.context(),
        L1_model=column("L1_model"),
        L2_model=column("L2_model"),
    )
    logger.info(f"Profile with {n} samples: L in [{L.min():.6g}, {L.max():.6g}]")
    return profile


def cross_validation(profile: Profile) -> Dict[str, float]:
    """Relative disagreement between the finite-difference and coarea routes."""
    span = float(profile.t[-1] - profile.t[0])
    scale1 = np.maximum(np.abs(profile.L1_fd), profile.L / span)
    scale2 = np.maximum(np.abs(profile.L2_fd), profile.L / span ** 2)
    report = {
        "L1_rel": float(np.max(np.abs(profile.L1_fd - profile.L1_coarea) / scale1)),
        "L2_rel": float(np.max(np.abs(profile.L2_fd - profile.L2_coarea) / scale2)),
    }
    if profile.L1_model is not None:
        report["L1_model_rel"] = float(np.max(np.abs(profile.L1_model - profile.L1_coarea) / scale1))
        report["L2_model_rel"] = float(np.max(np.abs(profile.L2_model - profile.L2_coarea) / scale2))
    return report
