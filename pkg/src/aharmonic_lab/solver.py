"""Dirichlet problem div(a(|grad u|_g) grad u) = 0 on the annulus chart.

The discretization is P1 on a two-triangles-per-cell mesh of the
(sigma, theta) rectangle, periodic in theta. In conformal coordinates the
weak form reads sum_T |T| a(s_T) grad_0 u . grad_0 phi = 0 with
s_T = |grad_0 u|_T / mu_T, so the solution minimizes the convex energy
sum_T |T| mu_T^2 Phi(s_T) with Phi' = F. Both iteration schemes descend
this energy:

- picard: frozen-coefficient (Kacanov) direction A(u) d = -g
- newton: the full Jacobian of the flux

Coefficients use s_eps = sqrt(s^2 + eps^2); eps is relaxed geometrically
down to a floor.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import integrate, optimize, sparse
from scipy.sparse import linalg as sparse_linalg

from src.config import Config
from .chart import d_sigma, d_theta, gradient_inner, gradient_norm, riemannian_laplacian
from .models import (
    AnnulusChart,
    DiffusivityModel,
    DomainError,
    ExtremumReport,
    OracleError,
    Solution,
    SolverError,
    SolverOptions,
    StructureViolation,
)
from .operators import invert_flux

logger = logging.getLogger(__name__)


def solver_options(config: Optional[Config] = None, **overrides) -> SolverOptions:
    if config is None:
        config = Config()
    values = dict(
        tol=config.solver_tol,
        max_iter=config.solver_max_iter,
        scheme=config.solver_scheme,
        damping=config.solver_damping,
        epsilon0=config.epsilon0,
        epsilon_decay=config.epsilon_decay,
        epsilon_interval=config.epsilon_interval,
        epsilon_floor_ratio=config.epsilon_floor_ratio,
        linear_tol=config.linear_tol,
        linear_max_iter=config.linear_max_iter,
        line_search_steps=config.line_search_steps,
    )
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SolverOptions(**values)


class P1Mesh:
    """Triangulation of a periodic chart.

    Cell (i, j) spans nodes (i, j), (i+1, j), (i, j+1), (i+1, j+1) with j+1
    taken mod n_theta. It is split into a lower triangle (right angle at
    (i, j)) and an upper one (right angle at (i+1, j+1)).
    """

    def __init__(self, chart: AnnulusChart):
        if not chart.periodic:
            raise DomainError("the P1 mesh needs a periodic chart")
        self.chart = chart
        n_s, n_t = chart.shape
        hs, ht = chart.h_sigma, chart.h_theta
        self.n_nodes = n_s * n_t
        self.area = 0.5 * hs * ht

        index = np.arange(self.n_nodes).reshape(n_s, n_t)
        i = np.arange(n_s - 1)[:, None]
        j = np.arange(n_t)[None, :]
        jp = (j + 1) % n_t
        n00 = np.broadcast_to(index[i, j], (n_s - 1, n_t)).ravel()
        n10 = np.broadcast_to(index[i + 1, j], (n_s - 1, n_t)).ravel()
        n01 = np.broadcast_to(index[i, jp], (n_s - 1, n_t)).ravel()
        n11 = np.broadcast_to(index[i + 1, jp], (n_s - 1, n_t)).ravel()
        seam = np.broadcast_to(j == n_t - 1, (n_s - 1, n_t)).ravel().astype(float)
        zeros = np.zeros_like(seam)
        self.n_cells = n00.size

        lower = np.stack([n00, n10, n01], axis=1)
        upper = np.stack([n11, n01, n10], axis=1)
        self.nodes = np.concatenate([lower, upper], axis=0)
        # 1 where a vertex is reached across the theta seam
        self.wrap = np.concatenate([np.stack([zeros, zeros, seam], axis=1),
                                    np.stack([seam, seam, zeros], axis=1)], axis=0)

        g_lower = np.array([[-1.0 / hs, -1.0 / ht], [1.0 / hs, 0.0], [0.0, 1.0 / ht]])
        g_upper = np.array([[1.0 / hs, 1.0 / ht], [-1.0 / hs, 0.0], [0.0, -1.0 / ht]])
        self.basis = np.concatenate([np.broadcast_to(g_lower, (self.n_cells, 3, 2)),
                                     np.broadcast_to(g_upper, (self.n_cells, 3, 2))], axis=0)

        log_mu = chart.log_mu
        cell_log_mu = 0.25 * (log_mu[:-1] + log_mu[1:] + np.roll(log_mu, -1, axis=1)[:-1]
                              + np.roll(log_mu, -1, axis=1)[1:])
        cell_mu = np.exp(cell_log_mu).ravel()
        self.mu = np.concatenate([cell_mu, cell_mu])

        free = np.zeros((n_s, n_t), dtype=bool)
        free[1:-1] = True
        self.free = np.flatnonzero(free.ravel())

    def gradients(self, u: np.ndarray, jump: float = 0.0) -> np.ndarray:
        """Chart gradient of u on every triangle, shape (T, 2)."""
        values = u.ravel()[self.nodes] + jump * self.wrap
        return np.einsum("ta,tak->tk", values, self.basis)

    def speed(self, grad: np.ndarray) -> np.ndarray:
        """s_T = |grad_0 u|_T / mu_T."""
        return np.hypot(grad[:, 0], grad[:, 1]) / self.mu

    def assemble_vector(self, flux: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Weak residual sum_T |T| flux . grad phi_a, and the sum of absolute contributions."""
        contributions = self.area * np.einsum("tak,tk->ta", self.basis, flux)
        nodes = self.nodes.ravel()
        g = np.bincount(nodes, weights=contributions.ravel(), minlength=self.n_nodes)
        scale = np.bincount(nodes, weights=np.abs(contributions).ravel(), minlength=self.n_nodes)
        return g, scale

    def assemble_matrix(self, tensor: np.ndarray) -> sparse.csr_matrix:
        """Stiffness matrix for per-triangle 2x2 tensors, shape (T, 2, 2)."""
        local = self.area * np.einsum("tak,tkl,tbl->tab", self.basis, tensor, self.basis)
        rows = np.broadcast_to(self.nodes[:, :, None], local.shape).ravel()
        cols = np.broadcast_to(self.nodes[:, None, :], local.shape).ravel()
        matrix = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(self.n_nodes, self.n_nodes))
        return matrix.tocsr()


def _coefficients(model: DiffusivityModel, speed: np.ndarray, epsilon: float) -> Tuple[np.ndarray, np.ndarray]:
    s_eps = np.sqrt(speed * speed + epsilon * epsilon)
    with np.errstate(all="ignore"):
        a = np.asarray(model.value(s_eps), dtype=float)
        D = np.asarray(model.elasticity_at(s_eps), dtype=float)
    if not np.all(np.isfinite(a)) or np.any(a <= 0.0):
        bad = np.flatnonzero(~np.isfinite(a) | (a <= 0.0))[0]
        raise StructureViolation(f"a(s) not finite and positive at s={s_eps[bad]:.6e}")
    if not np.all(np.isfinite(D)) or np.any(D <= -1.0):
        raise StructureViolation("1 + D(s) left (0, inf) during iteration")
    return a, D


def _flux(mesh: P1Mesh, model: DiffusivityModel, u: np.ndarray, epsilon: float, jump: float = 0.0):
    grad = mesh.gradients(u, jump)
    speed = mesh.speed(grad)
    a, D = _coefficients(model, speed, epsilon)
    return grad, speed, a, D, a[:, None] * grad


def _normalized(g: np.ndarray, scale: np.ndarray, rows: np.ndarray) -> float:
    top = float(np.max(scale[rows])) if rows.size else 0.0
    if top <= 0.0:
        return 0.0
    return float(np.max(np.abs(g[rows]))) / top


def weak_residual(chart: AnnulusChart, model: DiffusivityModel, u: np.ndarray,
                  epsilon: float = 1e-12, theta_jump: float = 0.0, mesh: Optional[P1Mesh] = None) -> float:
    """Scale-free weak residual of the P1 equation at interior nodes.

    The maximum nodal residual is divided by the largest sum of absolute
    element contributions, so a constant field gives 0 and noise gives O(1).
    """
    mesh = mesh or P1Mesh(chart)
    *_, flux = _flux(mesh, model, np.asarray(u, dtype=float), epsilon, theta_jump)
    g, scale = mesh.assemble_vector(flux)
    return _normalized(g, scale, mesh.free)


def pde_residual(solution: Solution) -> float:
    return weak_residual(solution.chart, solution.model, solution.u, epsilon=solution.epsilon)


def _solve_linear(matrix: sparse.csr_matrix, rhs: np.ndarray, options: SolverOptions) -> np.ndarray:
    preconditioner = sparse.diags(1.0 / matrix.diagonal())
    x, info = sparse_linalg.cg(matrix, rhs, rtol=options.linear_tol, atol=0.0,
                               maxiter=options.linear_max_iter, M=preconditioner)
    if info != 0 or not np.all(np.isfinite(x)):
        logger.warning(f"CG stopped with info={info}, falling back to a direct solve")
        x = sparse_linalg.spsolve(matrix.tocsc(), rhs)
    return x


def _line_search(slope, omega: float, steps: int) -> float:
    """Bisect omega down until the energy slope along the direction is small.

    ``slope(w)`` is the directional derivative of the energy at u + w d,
    negative at w = 0 and increasing in w.
    """
    slope0 = slope(0.0)
    if slope0 >= 0.0:
        return 0.0
    if slope(omega) <= 0.5 * abs(slope0):
        return omega
    lo, hi = 0.0, omega
    mid = omega
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        value = slope(mid)
        if abs(value) <= 0.5 * abs(slope0):
            return mid
        if value > 0.0:
            hi = mid
        else:
            lo = mid
    return mid


def initial_guess(chart: AnnulusChart, t1: float, t2: float) -> np.ndarray:
    x = (chart.sigma - chart.sigma[0]) / (chart.sigma[-1] - chart.sigma[0])
    return np.repeat((t1 + (t2 - t1) * x)[:, None], chart.n_theta, axis=1)


def solve_dirichlet(chart: AnnulusChart, model: DiffusivityModel, t1: float, t2: float,
                    options: Optional[SolverOptions] = None, config: Optional[Config] = None,
                    u0: Optional[np.ndarray] = None) -> Solution:
    """Solve with u = t1 on sigma = 0 and u = t2 on sigma = ln R.

    Convergence needs eps at its floor, a relative update below tol and a
    weak residual below tol. Otherwise SolverError carries the diagnostics.
    """
    if options is None:
        options = solver_options(config)
    if not t1 < t2:
        raise DomainError(f"boundary values must satisfy t1 < t2, got {t1}, {t2}")
    if options.scheme not in ("picard", "newton"):
        raise DomainError(f"unknown solver scheme '{options.scheme}'")

    mesh = P1Mesh(chart)
    free = mesh.free
    u = initial_guess(chart, t1, t2) if u0 is None else np.array(u0, dtype=float)
    u[0], u[-1] = t1, t2
    span = t2 - t1
    epsilon = options.epsilon0
    floor = options.epsilon_floor
    last_drop = 0
    history: List[Dict[str, float]] = []
    residual = math.inf
    update = math.inf

    logger.info(f"Solving {model.name} on {chart.n_sigma}x{chart.n_theta} ({options.scheme}), t in [{t1:.6g}, {t2:.6g}]")
    for iteration in range(1, options.max_iter + 1):
        grad, speed, a, D, flux = _flux(mesh, model, u, epsilon)
        g, scale = mesh.assemble_vector(flux)
        if options.scheme == "newton":
            s_eps2 = speed ** 2 + epsilon ** 2
            c = a * D / (mesh.mu ** 2 * s_eps2)
            tensor = c[:, None, None] * np.einsum("tk,tl->tkl", grad, grad)
            tensor[:, 0, 0] += a
            tensor[:, 1, 1] += a
        else:
            tensor = a[:, None, None] * np.eye(2)[None]
        matrix = mesh.assemble_matrix(tensor)[free][:, free]
        direction = np.zeros(mesh.n_nodes)
        direction[free] = _solve_linear(matrix, -g[free], options)
        step_field = direction.reshape(chart.shape)

        def slope(omega: float) -> float:
            *_, trial_flux = _flux(mesh, model, u + omega * step_field, epsilon)
            trial_g, _ = mesh.assemble_vector(trial_flux)
            return float(trial_g[free] @ direction[free])

        start = 1.0 if options.scheme == "newton" else options.damping
        omega = _line_search(slope, start, options.line_search_steps)
        u = u + omega * step_field
        update = omega * float(np.max(np.abs(direction))) / span

        *_, flux = _flux(mesh, model, u, epsilon)
        g, scale = mesh.assemble_vector(flux)
        residual = _normalized(g, scale, free)
        at_floor = epsilon <= floor * (1.0 + 1e-12)
        history.append({"iteration": iteration, "epsilon": epsilon, "omega": omega,
                        "update": update, "residual": residual})
        logger.debug(f"iter {iteration}: eps={epsilon:.2e} omega={omega:.3f} update={update:.3e} residual={residual:.3e}")

        settled = update < options.tol and residual < options.tol
        if settled and at_floor:
            logger.info(f"Converged after {iteration} iterations, residual {residual:.3e}")
            return Solution(chart=chart, model=model, u=u, t1=t1, t2=t2, epsilon=epsilon,
                            iterations=iteration, residual=residual, converged=True,
                            scheme=options.scheme, history=tuple(history))
        if not at_floor and (settled or iteration - last_drop >= options.epsilon_interval):
            epsilon = max(epsilon * options.epsilon_decay, floor)
            last_drop = iteration

    diagnostics = {"iterations": options.max_iter, "residual": residual, "update": update,
                   "epsilon": epsilon, "scheme": options.scheme}
    raise SolverError(f"no convergence for {model.name} within {options.max_iter} iterations "
                      f"(residual {residual:.3e}, update {update:.3e})", diagnostics)


# ---------------------------------------------------------------------------
# Radial reference
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialSolution:
    """Exact radial solution u(r) on the flat annulus r0 <= r <= r0 R.

    The flux r a(u') u' is the constant c, so u' = F^-1(c / r).
    """
    model: DiffusivityModel
    R: float
    t1: float
    t2: float
    c: float
    r_inner: float = 1.0
    quad_tol: float = 1e-10

    def slope(self, r) -> np.ndarray:
        return np.asarray(invert_flux(self.model, self.c / np.asarray(r, dtype=float)), dtype=float)

    def _increment(self, r_a: float, r_b: float) -> float:
        value, _ = integrate.quad(lambda r: float(invert_flux(self.model, self.c / r)), r_a, r_b,
                                  epsabs=self.quad_tol, epsrel=self.quad_tol, limit=200)
        return value

    def u_of_r(self, r):
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        order = np.argsort(r_arr)
        values = np.empty_like(r_arr)
        current_r, current_u = self.r_inner, self.t1
        for k in order:
            current_u += self._increment(current_r, r_arr[k])
            current_r = r_arr[k]
            values[k] = current_u
        return float(values[0]) if np.ndim(r) == 0 else values.reshape(np.shape(r))

    def r_of_t(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        r_outer = self.r_inner * self.R
        out = np.empty_like(t_arr)
        for k, value in enumerate(t_arr):
            if not self.t1 <= value <= self.t2:
                raise DomainError(f"level {value} outside [{self.t1}, {self.t2}]")
            if value == self.t1:
                out[k] = self.r_inner
            elif value == self.t2:
                out[k] = r_outer
            else:
                out[k] = optimize.brentq(lambda r: self.u_of_r(r) - value, self.r_inner, r_outer, xtol=1e-14)
        return float(out[0]) if np.ndim(t) == 0 else out.reshape(np.shape(t))

    def on_chart(self, chart: AnnulusChart) -> np.ndarray:
        """Nodal values on a flat annulus chart with matching R and r_inner."""
        radii = chart.r_inner * np.exp(chart.sigma)
        profile = np.asarray(self.u_of_r(radii), dtype=float)
        profile[0], profile[-1] = self.t1, self.t2
        return np.repeat(profile[:, None], chart.n_theta, axis=1)


def radial_oracle(model: DiffusivityModel, R: float, t1: float, t2: float, r_inner: float = 1.0,
                  config: Optional[Config] = None) -> RadialSolution:
    """Radial reference solution on the flat annulus, found by matching the total rise."""
    if config is None:
        config = Config()
    if not R > 1.0 or not t1 < t2 or not r_inner > 0.0:
        raise DomainError("radial reference needs R > 1, t1 < t2 and r_inner > 0")
    r_outer = r_inner * R
    rise = t2 - t1
    tol = config.oracle_quad_tol

    def total(c: float) -> float:
        value, _ = integrate.quad(lambda r: float(invert_flux(model, c / r)), r_inner, r_outer,
                                  epsabs=tol, epsrel=tol, limit=200)
        return value - rise

    if math.isfinite(model.flux_sup):
        c_hi = model.flux_sup * r_inner * (1.0 - 1e-12)
        if total(c_hi) < 0.0:
            raise OracleError(f"rise {rise:.6g} not reachable for {model.name} on R={R:.6g}")
    else:
        c_hi = 1.0
        for _ in range(200):
            if total(c_hi) > 0.0:
                break
            c_hi *= 2.0
        else:
            raise OracleError("could not bracket the radial flux constant")
    c_lo = c_hi
    for _ in range(400):
        c_lo *= 0.5
        if total(c_lo) < 0.0:
            break
    else:
        raise OracleError("could not bracket the radial flux constant")

    c = optimize.brentq(total, c_lo, c_hi, xtol=1e-15, rtol=1e-13)
    logger.debug(f"Radial reference for {model.name}: c = {c:.12g}")
    return RadialSolution(model=model, R=float(R), t1=float(t1), t2=float(t2), c=float(c),
                          r_inner=float(r_inner), quad_tol=tol)


# ---------------------------------------------------------------------------
# Diagnostics on solutions
# ---------------------------------------------------------------------------

def gradient_floor(solution: Solution, config: Optional[Config] = None) -> float:
    if config is None:
        config = Config()
    return config.gradient_floor_factor * (solution.t2 - solution.t1) / math.log(solution.chart.R)


def extremum_report(solution: Solution, config: Optional[Config] = None) -> ExtremumReport:
    """Maximum principle and interior gradient bound away from zero."""
    G = gradient_norm(solution.chart, solution.u)
    interior = G[1:-1]
    argmin = np.unravel_index(int(np.argmin(interior)), interior.shape)
    boundary = np.concatenate([G[0], G[-1]])
    return ExtremumReport(
        min_u=float(solution.u.min()),
        max_u=float(solution.u.max()),
        min_interior_gradient=float(interior.min()),
        min_boundary_gradient=float(boundary.min()),
        argmin=(int(argmin[0]) + 1, int(argmin[1])),
        floor=gradient_floor(solution, config),
    )


def theta_symmetry_defect(solution: Solution) -> float:
    """max over rotations of |u - u(theta + shift)|, relative to t2 - t1."""
    u = solution.u
    worst = max((float(np.max(np.abs(u - np.roll(u, k, axis=1)))) for k in range(1, u.shape[1])), default=0.0)
    return worst / (solution.t2 - solution.t1)


def laplacian_identity_residual(solution: Solution, margin: int = 2) -> float:
    """Interior defect of Delta u = -(D(G)/G) <grad u, grad G> with G = |grad u|_g."""
    chart = solution.chart
    G = gradient_norm(chart, solution.u)
    safe = np.maximum(G, np.finfo(float).tiny)
    lap = riemannian_laplacian(chart, solution.u)
    D = solution.model.elasticity_at(safe)
    defect = lap + D / safe * gradient_inner(chart, solution.u, G)
    grad_G = np.hypot(d_sigma(chart, G), d_theta(chart, G)) / chart.mu
    rows = slice(margin, -margin)
    scale = float(np.max(grad_G[rows]))
    if scale <= 0.0:
        return float(np.max(np.abs(defect[rows])))
    return float(np.max(np.abs(defect[rows]))) / scale
