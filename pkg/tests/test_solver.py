import logging
import math
import unittest

import numpy as np

from src.config import Config
from src.aharmonic_lab import (
    DomainError,
    OracleError,
    Solution,
    SolverError,
    build_chart,
    build_patch,
    minimal_surface,
    p_harmonic,
    radial_oracle,
    solve_dirichlet,
    solver_options,
    weak_residual,
)
from src.aharmonic_lab.solver import (
    extremum_report,
    laplacian_identity_residual,
    pde_residual,
    theta_symmetry_defect,
)


logging.disable(logging.CRITICAL)


class TestSolverOptions(unittest.TestCase):

    def test_overrides_take_precedence(self):
        options = solver_options(Config(solver_tol=1e-6), scheme="newton", tol=None)
        self.assertEqual(options.scheme, "newton")
        self.assertEqual(options.tol, 1e-6)
        self.assertAlmostEqual(options.epsilon_floor, 1e-5)


class TestSolveDirichlet(unittest.TestCase):

    def test_laplace_on_flat_annulus_is_linear_in_log_radius(self):
        chart = build_chart(2.0, 24, 32)
        solution = solve_dirichlet(chart, p_harmonic(2.0), 0.0, 1.0)
        self.assertTrue(solution.converged)
        exact = chart.sigma / math.log(2.0)
        np.testing.assert_allclose(solution.u, exact[:, None] * np.ones((1, 32)), atol=1e-8)
        self.assertLess(pde_residual(solution), 1e-8)

    def test_p_laplacian_matches_radial_reference(self):
        chart = build_chart(2.0, 33, 32)
        model = p_harmonic(3.0)
        reference = radial_oracle(model, 2.0, 0.0, 1.0).on_chart(chart)
        for scheme in ("picard", "newton"):
            options = solver_options(scheme=scheme, tol=1e-7)
            solution = solve_dirichlet(chart, model, 0.0, 1.0, options)
            self.assertLess(float(np.max(np.abs(solution.u - reference))), 5e-3, msg=scheme)
            self.assertEqual(solution.scheme, scheme)
            self.assertLess(theta_symmetry_defect(solution), 1e-6, msg=scheme)

    def test_boundary_values_are_kept(self):
        chart = build_chart(2.0, 20, 24)
        solution = solve_dirichlet(chart, p_harmonic(3.0), -1.0, 2.0, solver_options(scheme="newton"))
        np.testing.assert_allclose(solution.u[0], -1.0)
        np.testing.assert_allclose(solution.u[-1], 2.0)
        report = extremum_report(solution)
        self.assertGreaterEqual(report.min_u, -1.0 - 1e-9)
        self.assertLessEqual(report.max_u, 2.0 + 1e-9)
        self.assertTrue(report.passed)

    def test_invalid_arguments(self):
        chart = build_chart(2.0, 20, 24)
        with self.assertRaises(DomainError):
            solve_dirichlet(chart, p_harmonic(2.0), 1.0, 0.0)
        with self.assertRaises(DomainError):
            solve_dirichlet(chart, p_harmonic(2.0), 0.0, 1.0, solver_options(scheme="multigrid"))
        with self.assertRaises(DomainError):
            solve_dirichlet(build_patch((0.0, 1.0, 0.0, 1.0), 20, 20), p_harmonic(2.0), 0.0, 1.0)

    def test_iteration_budget_exhausted(self):
        chart = build_chart(2.0, 20, 24)
        with self.assertRaises(SolverError) as context:
            solve_dirichlet(chart, p_harmonic(4.0), 0.0, 1.0, solver_options(max_iter=2))
        self.assertEqual(context.exception.diagnostics["iterations"], 2)

    def test_weak_residual_is_scale_free(self):
        chart = build_chart(2.0, 20, 24)
        u = chart.sigma[:, None] * np.ones((1, 24))
        self.assertLess(weak_residual(chart, p_harmonic(2.0), u), 1e-12)
        rng = np.random.default_rng(0)
        self.assertGreater(weak_residual(chart, p_harmonic(2.0), rng.normal(size=chart.shape)), 1e-2)


class TestRadialReference(unittest.TestCase):

    def test_harmonic_reference(self):
        reference = radial_oracle(p_harmonic(2.0), 2.0, 0.0, 1.0)
        self.assertAlmostEqual(reference.c, 1.0 / math.log(2.0), places=8)
        self.assertAlmostEqual(reference.r_of_t(0.5), math.sqrt(2.0), places=8)

    def test_catenoid_flux_constant(self):
        reference = radial_oracle(minimal_surface(), 2.4, math.log(2.0), math.acosh(3.0), r_inner=1.25)
        self.assertAlmostEqual(reference.c, 1.0, places=6)
        self.assertAlmostEqual(reference.u_of_r(2.0), math.acosh(2.0), places=6)

    def test_unreachable_rise(self):
        with self.assertRaises(OracleError):
            radial_oracle(minimal_surface(), 2.0, 0.0, 5.0)

    def test_level_outside_range(self):
        reference = radial_oracle(p_harmonic(2.0), 2.0, 0.0, 1.0)
        with self.assertRaises(DomainError):
            reference.r_of_t(1.5)


class TestSolutionDiagnostics(unittest.TestCase):

    def test_laplacian_identity_on_radial_field(self):
        chart = build_chart(2.0, 129, 64)
        model = p_harmonic(3.0)
        u = radial_oracle(model, 2.0, 0.0, 1.0).on_chart(chart)
        solution = Solution(chart=chart, model=model, u=u, t1=0.0, t2=1.0)
        self.assertLess(laplacian_identity_residual(solution), 1e-2)


if __name__ == "__main__":
    unittest.main()
