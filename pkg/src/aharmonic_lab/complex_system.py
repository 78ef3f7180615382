"""Complex-gradient form of the equation and the stream function.

With f = u_x - i u_y and F = sqrt(a(s)) f, s = |f|/lambda, a solution
satisfies the first-order system

    F_zbar = a1 F_z + a2 conj(F_z) - 2 a1 F lambda_z/lambda - 2 a2 conj(F) lambda_zbar/lambda

with a1 = (C - B_r)/2 * conj(F)/F and a2 = (C + B_r)/2 * F/conj(F), where
B_r = D/(D + 4) and C = -D/(3D + 4) are evaluated at D = D(s). In the
chart frame the planar lambda is replaced by mu.

The stream function v solves dv = a(s) * d u (Hodge star). It is
reconstructed on edge midpoints of the P1 mesh, where the duality with the
discrete equation is exact, and averaged to nodes.
"""
from __future__ import annotations

import logging
import math
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.integrate import cumulative_trapezoid
from scipy.sparse import linalg as sparse_linalg

from src.config import Config
from .chart import d_sigma, d_theta, gradient_norm
from .models import (
    AnnulusChart,
    CriticalProximityError,
    DiffusivityModel,
    DomainError,
    Solution,
    StreamError,
    StreamSolution,
    SystemCoefficients,
)
from .operators import elliptic_coefficient_fields
from .solver import P1Mesh, gradient_floor

logger = logging.getLogger(__name__)


def complex_gradient(solution: Solution, frame: str = "chart") -> np.ndarray:
    """f = u_sigma - i u_theta in the chart, or u_x - i u_y in the plane."""
    chart = solution.chart
    f = d_sigma(chart, solution.u) - 1j * d_theta(chart, solution.u)
    if frame == "chart":
        return f
    if frame == "cartesian":
        if chart.topology.value != "annulus_in_disk":
            raise DomainError("the cartesian frame exists for annuli in a disk only")
        return f / chart.z
    raise DomainError(f"unknown frame '{frame}'")


def _speed(solution: Solution, f: np.ndarray) -> np.ndarray:
    return np.abs(f) / solution.chart.mu


def F_field(solution: Solution) -> np.ndarray:
    """F = sqrt(a(s)) f in the chart frame."""
    f = complex_gradient(solution)
    s = np.maximum(_speed(solution, f), solution.epsilon)
    return np.exp(0.5 * solution.model.log_value(s)) * f


def _guard(solution: Solution, config: Config) -> np.ndarray:
    G = gradient_norm(solution.chart, solution.u)
    floor = gradient_floor(solution, config)
    lowest = float(G.min())
    if lowest < floor:
        raise CriticalProximityError("complex system needs a non-vanishing gradient", lowest, floor)
    return G


def system_coefficients(solution: Solution, config: Optional[Config] = None) -> SystemCoefficients:
    if config is None:
        config = Config()
    G = _guard(solution, config)
    F = F_field(solution)
    D = np.asarray(solution.model.elasticity_at(G), dtype=float)
    _, C, B_ratio = elliptic_coefficient_fields(D)
    phase = np.conj(F) / F
    a1 = 0.5 * (C - B_ratio) * phase
    a2 = 0.5 * (C + B_ratio) / phase
    return SystemCoefficients(a1=a1, a2=a2, D=D)


def _wirtinger(chart: AnnulusChart, F: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    F_s, F_t = d_sigma(chart, F), d_theta(chart, F)
    return 0.5 * (F_s - 1j * F_t), 0.5 * (F_s + 1j * F_t)


def system_residual(solution: Solution, margin: int = 2, config: Optional[Config] = None) -> float:
    """Normalized interior defect of the first-order system."""
    if config is None:
        config = Config()
    chart = solution.chart
    coefficients = system_coefficients(solution, config)
    F = F_field(solution)
    F_z, F_zbar = _wirtinger(chart, F)
    log_mu = chart.log_mu
    phi_s, phi_t = d_sigma(chart, log_mu), d_theta(chart, log_mu)
    mu_z = 0.5 * (phi_s - 1j * phi_t)
    mu_zbar = 0.5 * (phi_s + 1j * phi_t)
    a1, a2 = coefficients.a1, coefficients.a2
    lhs = F_zbar - a1 * F_z - a2 * np.conj(F_z)
    rhs = -2.0 * a1 * F * mu_z - 2.0 * a2 * np.conj(F) * mu_zbar
    rows = slice(margin, chart.n_sigma - margin)
    defect = np.abs(lhs - rhs)[rows]
    F_s, F_t = d_sigma(chart, F), d_theta(chart, F)
    scale = (np.abs(F_s) + np.abs(F_t) + np.abs(F) * (np.abs(phi_s) + np.abs(phi_t)))[rows]
    return float(defect.max() / max(float(scale.max()), np.finfo(float).tiny))


# ---------------------------------------------------------------------------
# Stream function
# ---------------------------------------------------------------------------

class EdgeLayout:
    """Edge-midpoint unknowns of the P1 mesh on a periodic chart.

    Edge families, all indexed by the node (i, j) they start from:
    sigma-edges (i, j)-(i+1, j), theta-edges (i, j)-(i, j+1) and
    diagonals (i+1, j)-(i, j+1). The last unknown is the period J.
    """

    def __init__(self, chart: AnnulusChart):
        n_s, n_t = chart.shape
        self.shape = (n_s, n_t)
        self.n_sigma_edges = (n_s - 1) * n_t
        self.n_theta_edges = n_s * n_t
        self.n_diagonals = (n_s - 1) * n_t
        self.n_unknowns = self.n_sigma_edges + self.n_theta_edges + self.n_diagonals + 1
        self.jump_index = self.n_unknowns - 1
        self.sigma_edge = np.arange(self.n_sigma_edges).reshape(n_s - 1, n_t)
        self.theta_edge = self.n_sigma_edges + np.arange(self.n_theta_edges).reshape(n_s, n_t)
        self.diagonal = self.n_sigma_edges + self.n_theta_edges + np.arange(self.n_diagonals).reshape(n_s - 1, n_t)


def _difference_system(chart: AnnulusChart, layout: EdgeLayout, star_flux: np.ndarray
                       ) -> Tuple[sparse.csr_matrix, np.ndarray]:
    """Least-squares system: midpoint differences inside each triangle equal grad v . offset.

    ``star_flux`` has shape (T, 2): the rotated flux on lower triangles
    followed by upper ones, in P1Mesh order.
    """
    n_s, n_t = chart.shape
    hs, ht = chart.h_sigma, chart.h_theta
    cells = (n_s - 1) * n_t
    lower, upper = star_flux[:cells], star_flux[cells:]
    j = np.arange(n_t)
    jp = (j + 1) % n_t
    seam = np.broadcast_to(j == n_t - 1, (n_s - 1, n_t)).ravel().astype(float)

    Es = layout.sigma_edge.ravel()
    Es_next = layout.sigma_edge[:, jp].ravel()
    Et = layout.theta_edge[:-1].ravel()
    Et_up = layout.theta_edge[1:].ravel()
    Ed = layout.diagonal.ravel()

    rows, cols, vals, rhs = [], [], [], []

    def equation(plus: np.ndarray, minus: np.ndarray, target: np.ndarray, jump: Optional[np.ndarray] = None) -> None:
        start = sum(len(r) for r in rhs)
        index = start + np.arange(plus.size)
        rows.extend([index, index])
        cols.extend([plus, minus])
        vals.extend([np.ones(plus.size), -np.ones(plus.size)])
        if jump is not None:
            hit = jump > 0.0
            rows.append(index[hit])
            cols.append(np.full(int(hit.sum()), layout.jump_index))
            vals.append(jump[hit])
        rhs.append(target)

    # lower triangle: midpoints Es(i,j) at (h/2, 0), Et(i,j) at (0, k/2), Ed(i,j) at (h/2, k/2)
    equation(Ed, Es, 0.5 * ht * lower[:, 1])
    equation(Ed, Et, 0.5 * hs * lower[:, 0])
    # upper triangle: Es(i,j+1) at (h/2, k), Et(i+1,j) at (h, k/2); across the seam Es(i,0) gains J
    equation(Es_next, Ed, 0.5 * ht * upper[:, 1], jump=seam)
    equation(Et_up, Ed, 0.5 * hs * upper[:, 0])

    n_rows = sum(len(r) for r in rhs)
    rows.append(np.array([n_rows]))
    cols.append(np.array([layout.theta_edge[0, 0]]))
    vals.append(np.array([1.0]))
    rhs.append(np.array([0.0]))

    matrix = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_rows + 1, layout.n_unknowns),
    ).tocsr()
    return matrix, np.concatenate(rhs)


def _path_integrated(chart: AnnulusChart, q_sigma: np.ndarray, q_theta: np.ndarray) -> Tuple[np.ndarray, float]:
    """Nodal v by integrating along the inner circle, then outward along sigma-lines."""
    theta_ext = np.append(chart.theta, 2.0 * math.pi)
    inner = np.append(q_sigma[0], q_sigma[0, 0])
    along_inner = cumulative_trapezoid(inner, theta_ext, initial=0.0)
    jump = float(along_inner[-1])
    v = along_inner[None, :-1] + cumulative_trapezoid(-q_theta, chart.sigma, axis=0, initial=0.0)
    return v, jump


def _initial_midpoints(layout: EdgeLayout, v: np.ndarray, jump: float) -> np.ndarray:
    right = np.roll(v, -1, axis=1)
    right[:, -1] += jump
    x0 = np.empty(layout.n_unknowns)
    x0[layout.sigma_edge.ravel()] = 0.5 * (v[:-1] + v[1:]).ravel()
    x0[layout.theta_edge.ravel()] = 0.5 * (v + right).ravel()
    x0[layout.diagonal.ravel()] = 0.5 * (v[1:] + right[:-1]).ravel()
    x0[layout.jump_index] = jump
    return x0


def _triangle_gradients(chart: AnnulusChart, layout: EdgeLayout, x: np.ndarray) -> np.ndarray:
    """Gradient of the midpoint-linear reconstruction on every triangle, P1Mesh order."""
    hs, ht = chart.h_sigma, chart.h_theta
    n_t = chart.n_theta
    jp = (np.arange(n_t) + 1) % n_t
    jump = x[layout.jump_index]
    Es = x[layout.sigma_edge]
    Es_next = x[layout.sigma_edge[:, jp]]
    Es_next[:, -1] += jump
    Et = x[layout.theta_edge[:-1]]
    Et_up = x[layout.theta_edge[1:]]
    Ed = x[layout.diagonal]
    lower = np.column_stack([((Ed - Et) / (0.5 * hs)).ravel(), ((Ed - Es) / (0.5 * ht)).ravel()])
    upper = np.column_stack([((Et_up - Ed) / (0.5 * hs)).ravel(), ((Es_next - Ed) / (0.5 * ht)).ravel()])
    return np.concatenate([lower, upper], axis=0)


def _nodal_from_midpoints(layout: EdgeLayout, x: np.ndarray) -> np.ndarray:
    theta_mid = x[layout.theta_edge]
    left = np.roll(theta_mid, 1, axis=1)
    left[:, 0] -= x[layout.jump_index]
    return 0.5 * (theta_mid + left)


def _least_squares(matrix: sparse.csr_matrix, rhs: np.ndarray, x0: np.ndarray, config: Config) -> Tuple[np.ndarray, int]:
    result = sparse_linalg.lsqr(matrix, rhs, atol=config.stream_lsqr_tol, btol=config.stream_lsqr_tol,
                                iter_lim=config.stream_lsqr_iter, x0=x0)
    x, istop, iterations = result[0], result[1], result[2]
    if not np.all(np.isfinite(x)):
        raise StreamError("least-squares cleanup produced non-finite values")
    if istop == 7:
        logger.warning("lsqr hit its iteration limit, solving the normal equations directly")
        normal = (matrix.T @ matrix).tocsc()
        x = sparse_linalg.spsolve(normal, matrix.T @ rhs)
        if not np.all(np.isfinite(x)):
            raise StreamError("curl cleanup diverged")
    return x, int(iterations)


def stream_function(solution: Solution, config: Optional[Config] = None) -> StreamSolution:
    """Stream function of a solution on a periodic chart.

    The period ``branch_jump`` is the flux of a(s) grad u through any
    circle around the hole.
    """
    if config is None:
        config = Config()
    chart = solution.chart
    if not chart.periodic:
        raise DomainError("stream functions are built on periodic charts")
    mesh = P1Mesh(chart)
    layout = EdgeLayout(chart)

    grad = mesh.gradients(solution.u)
    s = np.sqrt(mesh.speed(grad) ** 2 + solution.epsilon ** 2)
    a = np.asarray(solution.model.value(s), dtype=float)
    flux = a[:, None] * grad
    star_flux = np.column_stack([-flux[:, 1], flux[:, 0]])

    G = np.maximum(gradient_norm(chart, solution.u), solution.epsilon)
    a_nodes = np.asarray(solution.model.value(G), dtype=float)
    q_sigma = a_nodes * d_sigma(chart, solution.u)
    q_theta = a_nodes * d_theta(chart, solution.u)
    v_path, jump_path = _path_integrated(chart, q_sigma, q_theta)

    matrix, rhs = _difference_system(chart, layout, star_flux)
    x, iterations = _least_squares(matrix, rhs, _initial_midpoints(layout, v_path, jump_path), config)
    fit = float(np.linalg.norm(matrix @ x - rhs) / max(np.linalg.norm(rhs), np.finfo(float).tiny))
    gradients = _triangle_gradients(chart, layout, x)
    v = _nodal_from_midpoints(layout, x)
    jump = float(x[layout.jump_index])
    logger.debug(f"Stream function: period {jump:.10g} (path estimate {jump_path:.10g}), fit {fit:.3e}")
    return StreamSolution(chart=chart, v=v, branch_jump=jump, triangle_gradients=gradients,
                          fit_residual=fit, iterations=iterations)


def _edge_tests(chart: AnnulusChart, layout: EdgeLayout) -> Tuple[np.ndarray, np.ndarray]:
    """Edge index and gradient of the edge-midpoint hat function for each (triangle, edge) pair."""
    hs, ht = chart.h_sigma, chart.h_theta
    n_t = chart.n_theta
    jp = (np.arange(n_t) + 1) % n_t
    cells = layout.n_sigma_edges
    lower_edges = np.stack([layout.sigma_edge.ravel(), layout.theta_edge[:-1].ravel(), layout.diagonal.ravel()], axis=1)
    upper_edges = np.stack([layout.sigma_edge[:, jp].ravel(), layout.theta_edge[1:].ravel(), layout.diagonal.ravel()], axis=1)
    # grad psi_e = -2 grad(barycentric of the vertex opposite e)
    lower_grads = np.array([[0.0, -2.0 / ht], [-2.0 / hs, 0.0], [2.0 / hs, 2.0 / ht]])
    upper_grads = np.array([[0.0, 2.0 / ht], [2.0 / hs, 0.0], [-2.0 / hs, -2.0 / ht]])
    edges = np.concatenate([lower_edges, upper_edges], axis=0)
    grads = np.concatenate([np.broadcast_to(lower_grads, (cells, 3, 2)),
                            np.broadcast_to(upper_grads, (cells, 3, 2))], axis=0)
    return edges, grads


def conjugate_residual(stream: StreamSolution, b: DiffusivityModel, epsilon: float = 1e-12) -> float:
    """Weak residual of div(b(|grad v|_g) grad v) = 0 with edge-midpoint test functions.

    Boundary edges (theta-edges on the two circles) carry no equation.
    """
    chart = stream.chart
    mesh = P1Mesh(chart)
    layout = EdgeLayout(chart)
    grad = stream.triangle_gradients
    s = np.sqrt(mesh.speed(grad) ** 2 + epsilon ** 2)
    coefficient = np.asarray(b.value(s), dtype=float)
    if not np.all(np.isfinite(coefficient)):
        raise StreamError("conjugate diffusivity is not finite on the stream gradient")
    flux = coefficient[:, None] * grad
    edges, tests = _edge_tests(chart, layout)
    contributions = mesh.area * np.einsum("tek,tk->te", tests, flux)
    residual = np.bincount(edges.ravel(), weights=contributions.ravel(), minlength=layout.n_unknowns)
    scale = np.bincount(edges.ravel(), weights=np.abs(contributions).ravel(), minlength=layout.n_unknowns)
    interior = np.ones(layout.n_unknowns, dtype=bool)
    interior[layout.theta_edge[0]] = False
    interior[layout.theta_edge[-1]] = False
    interior[layout.jump_index] = False
    top = float(scale[interior].max())
    if top <= 0.0:
        return 0.0
    return float(np.abs(residual[interior]).max()) / top


def _theta_derivative_with_jump(chart: AnnulusChart, v: np.ndarray, jump: float) -> np.ndarray:
    right = np.roll(v, -1, axis=1)
    right[:, -1] += jump
    left = np.roll(v, 1, axis=1)
    left[:, 0] -= jump
    return (right - left) / (2.0 * chart.h_theta)


def stream_gradient_norm(stream: StreamSolution) -> np.ndarray:
    chart = stream.chart
    v_t = _theta_derivative_with_jump(chart, stream.v, stream.branch_jump)
    return np.hypot(d_sigma(chart, stream.v), v_t) / chart.mu


def duality_error(stream: StreamSolution, solution: Solution, margin: int = 2) -> float:
    """max relative gap between |grad v|_g and a(|grad u|_g) |grad u|_g in the interior."""
    G = np.maximum(gradient_norm(solution.chart, solution.u), solution.epsilon)
    expected = np.asarray(solution.model.value(G), dtype=float) * G
    measured = stream_gradient_norm(stream)
    rows = slice(margin, solution.chart.n_sigma - margin)
    return float(np.max(np.abs(measured[rows] - expected[rows]) / expected[rows]))


def conjugate_coefficient_check(stream: StreamSolution, solution: Solution, b: DiffusivityModel,
                                margin: int = 2) -> Dict[str, float]:
    """Compare |a1|, |a2| built from (v, b) with those from (u, a).

    Conjugation maps D to -D/(1 + D), which leaves both magnitudes unchanged.
    """
    rows = slice(margin, solution.chart.n_sigma - margin)
    G = np.maximum(gradient_norm(solution.chart, solution.u), solution.epsilon)
    H = np.maximum(stream_gradient_norm(stream), solution.epsilon)
    _, C_u, B_u = elliptic_coefficient_fields(solution.model.elasticity_at(G))
    _, C_v, B_v = elliptic_coefficient_fields(b.elasticity_at(H))
    first_u, first_v = 0.5 * np.abs(C_u - B_u)[rows], 0.5 * np.abs(C_v - B_v)[rows]
    second_u, second_v = 0.5 * np.abs(C_u + B_u)[rows], 0.5 * np.abs(C_v + B_v)[rows]
    tiny = np.finfo(float).tiny

    def gap(x: np.ndarray, y: np.ndarray) -> float:
        scale = max(float(np.max(np.abs(x))), tiny)
        return float(np.max(np.abs(x - y))) / scale

    return {
        "a1_rel": gap(first_u, first_v),
        "a2_rel": gap(second_u, second_v),
        "min_grad_u": float(G[rows].min()),
        "min_grad_v": float(H[rows].min()),
    }
