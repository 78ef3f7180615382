import logging
import math
import unittest

import numpy as np

from src.aharmonic_lab import (
    CriticalProximityError,
    DomainError,
    Solution,
    Topology,
    build_chart,
    build_patch,
    complex_gradient,
    conjugate_model,
    conjugate_residual,
    p_harmonic,
    radial_oracle,
    stream_function,
    system_coefficients,
    system_residual,
)
from src.aharmonic_lab.chart import d_sigma, d_theta
from src.aharmonic_lab.complex_system import F_field, conjugate_coefficient_check, duality_error


logging.disable(logging.CRITICAL)


def log_radius_solution(R=2.0, n_sigma=33, n_theta=32, lambda_spec="flat", topology=Topology.ANNULUS_IN_DISK):
    chart = build_chart(R, n_sigma, n_theta, lambda_spec, topology)
    u = (chart.sigma / math.log(R))[:, None] * np.ones((1, n_theta))
    return Solution(chart=chart, model=p_harmonic(2.0), u=u, t1=0.0, t2=1.0)


def radial_p_solution(p=3.0, n_sigma=129, n_theta=64):
    chart = build_chart(2.0, n_sigma, n_theta)
    model = p_harmonic(p)
    u = radial_oracle(model, 2.0, 0.0, 1.0).on_chart(chart)
    return Solution(chart=chart, model=model, u=u, t1=0.0, t2=1.0)


class TestComplexGradient(unittest.TestCase):

    def test_cartesian_frame_of_log_radius(self):
        solution = log_radius_solution()
        f = complex_gradient(solution, "cartesian")
        z = solution.chart.z
        # u = log|z| / log 2 gives u_x - i u_y = 1 / (z log 2)
        np.testing.assert_allclose(f, 1.0 / (z * math.log(2.0)), rtol=1e-10)

    def test_frames(self):
        solution = log_radius_solution(topology=Topology.CYLINDER)
        self.assertEqual(complex_gradient(solution).shape, solution.chart.shape)
        with self.assertRaises(DomainError):
            complex_gradient(solution, "cartesian")
        with self.assertRaises(DomainError):
            complex_gradient(solution, "polar")


class TestSystem(unittest.TestCase):

    def test_harmonic_case_has_no_coefficients(self):
        solution = log_radius_solution()
        coefficients = system_coefficients(solution)
        self.assertEqual(coefficients.sup_bound, 0.0)
        self.assertLess(system_residual(solution), 1e-10)

    def test_p_laplacian_residual_and_ellipticity(self):
        solution = radial_p_solution()
        coefficients = system_coefficients(solution)
        # D = 1: |C| = 1/7 and |B_r| = 1/5
        self.assertAlmostEqual(coefficients.sup_bound, 0.2, places=10)
        self.assertLess(system_residual(solution), 2e-2)

    def test_linear_solution_fixes_the_lower_order_pairing(self):
        # u = x has |grad u| = 1, so it solves every flat p-Laplacian and F = a(1)^(1/2) z is not real
        chart = build_chart(2.0, 65, 64)
        solution = Solution(chart=chart, model=p_harmonic(4.0), u=chart.z.real, t1=0.0, t2=1.0)
        np.testing.assert_allclose(complex_gradient(solution, "cartesian"), 1.0, atol=1e-2)

        F = F_field(solution)
        coefficients = system_coefficients(solution)
        a1, a2 = coefficients.a1, coefficients.a2
        F_s, F_t = d_sigma(chart, F), d_theta(chart, F)
        F_z, F_zbar = 0.5 * (F_s - 1j * F_t), 0.5 * (F_s + 1j * F_t)
        phi_s, phi_t = d_sigma(chart, chart.log_mu), d_theta(chart, chart.log_mu)
        phi_z, phi_zbar = 0.5 * (phi_s - 1j * phi_t), 0.5 * (phi_s + 1j * phi_t)
        lhs = F_zbar - a1 * F_z - a2 * np.conj(F_z)
        kept = lhs + 2.0 * a1 * F * phi_z + 2.0 * a2 * np.conj(F) * phi_zbar
        swapped = lhs + 2.0 * a1 * np.conj(F) * phi_z + 2.0 * a2 * F * phi_zbar
        rows = slice(2, -2)
        scale = np.abs(F).max()

        self.assertLess(np.abs(kept[rows]).max() / scale, 1e-2)
        self.assertGreater(np.abs(swapped[rows]).max() / scale, 0.3)
        self.assertLess(system_residual(solution), 1e-2)

    def test_critical_point_is_rejected(self):
        solution = log_radius_solution()
        flat = Solution(chart=solution.chart, model=solution.model, u=np.full(solution.chart.shape, 0.5),
                        t1=0.0, t2=1.0)
        with self.assertRaises(CriticalProximityError):
            system_coefficients(flat)


class TestStreamFunction(unittest.TestCase):

    def test_period_of_harmonic_conjugate(self):
        solution = log_radius_solution()
        stream = stream_function(solution)
        self.assertAlmostEqual(stream.branch_jump, 2.0 * math.pi / math.log(2.0), places=6)
        self.assertLess(stream.fit_residual, 1e-8)
        self.assertLess(conjugate_residual(stream, conjugate_model(solution.model)), 1e-8)
        self.assertLess(duality_error(stream, solution), 1e-6)

    def test_conjugate_of_p_laplacian(self):
        solution = radial_p_solution(3.0, n_sigma=65, n_theta=32)
        stream = stream_function(solution)
        conjugate = conjugate_model(solution.model)
        reference = radial_oracle(solution.model, 2.0, 0.0, 1.0)
        # the period is the flux of a(|grad u|) grad u through a circle
        self.assertAlmostEqual(stream.branch_jump / (2.0 * math.pi * reference.c), 1.0, places=2)
        self.assertLess(conjugate_residual(stream, conjugate), 1e-2)
        check = conjugate_coefficient_check(stream, solution, conjugate)
        self.assertLess(check["a1_rel"], 5e-2)
        self.assertLess(check["a2_rel"], 5e-2)

    def test_patch_has_no_stream_function(self):
        chart = build_patch((1.0, 2.0, 1.0, 2.0), 20, 20)
        solution = Solution(chart=chart, model=p_harmonic(2.0), u=chart.z.real.copy(), t1=1.0, t2=2.0)
        with self.assertRaises(DomainError):
            stream_function(solution)


if __name__ == "__main__":
    unittest.main()
