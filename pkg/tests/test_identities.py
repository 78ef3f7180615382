import logging
import math
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from src.config import Config
from src.aharmonic_lab import (
    CordesConstants,
    DomainError,
    build_chart,
    build_patch,
    cordes_claim_sample,
    cordes_claim_slack,
    cordes_constants,
    cordes_discriminant_sample,
    det_hess_identity_residual,
    kato_defect,
    refinement_order,
    run_identity_suite,
)
from src.aharmonic_lab.identities import margin_nodes, quadratic_checks


logging.disable(logging.CRITICAL)

SAMPLES = 20_000


class TestQuadraticExactness(unittest.TestCase):

    def test_every_identity_is_exact_on_quadratics(self):
        for name, value in quadratic_checks((1.0, 2.0, 1.0, 2.0)).items():
            self.assertLess(value, 1e-8, msg=name)


class TestGridIdentities(unittest.TestCase):

    def test_residuals_shrink_under_refinement(self):
        report = run_identity_suite(grids=(32, 64))
        self.assertEqual(report["grids"], [32, 64])
        self.assertIn("quadratic", report)
        for name, (coarse, fine) in report["residuals"].items():
            self.assertLess(fine, coarse, msg=name)
            self.assertGreater(report["orders"][name], 1.0, msg=name)

    def test_curved_patch_has_no_quadratic_section(self):
        report = run_identity_suite({"topology": "patch", "lambda": {"kind": "gaussian_bump", "c": 0.3}}, (32, 64))
        self.assertNotIn("quadratic", report)
        self.assertEqual(set(report["residuals"]), {"det_hess", "kato", "bochner", "log_gradient"})

    def test_hyperbolic_annulus(self):
        report = run_identity_suite({"topology": "annulus_in_disk", "R": 3.0, "lambda": "hyperbolic_disk"}, (32, 64))
        for name, (coarse, fine) in report["residuals"].items():
            self.assertLess(fine, coarse, msg=name)

    def test_grid_sequence_must_increase(self):
        with self.assertRaises(DomainError):
            run_identity_suite(grids=(64, 32))
        with self.assertRaises(DomainError):
            run_identity_suite(grids=(64,))

    def test_kato_identity_for_harmonic_field(self):
        chart = build_patch((1.0, 2.0, 1.0, 2.0), 96, 96)
        self.assertLess(kato_defect(chart, (chart.z ** 3).real), 1e-3)

    def test_margin_grows_with_the_grid(self):
        config = Config()
        self.assertEqual(margin_nodes(32, config), config.identity_margin)
        self.assertEqual(margin_nodes(257, config), 16)


class TestRefinementOrder(unittest.TestCase):

    def test_second_order_sequence(self):
        self.assertAlmostEqual(refinement_order([4e-2, 1e-2, 2.5e-3], [32, 64, 128]), 2.0)

    def test_exact_zero_gives_nan(self):
        self.assertTrue(math.isnan(refinement_order([1e-3, 0.0], [32, 64])))

    def test_needs_two_pairs(self):
        with self.assertRaises(DomainError):
            refinement_order([1e-3], [32])


class TestCordes(unittest.TestCase):

    def test_identity_matrices(self):
        W = np.eye(2)
        self.assertAlmostEqual(cordes_claim_slack(W, W, 2.0, 3.0), 3.0 * 4.0 - (2.0 + 4.0))

    def test_no_violations_for_valid_constants(self):
        constants = cordes_constants(0.5, 3.0)
        claim = cordes_claim_sample(constants, SAMPLES, seed=7)
        discriminant = cordes_discriminant_sample(constants, SAMPLES, seed=7)
        self.assertTrue(claim.ok)
        self.assertTrue(discriminant.ok)
        self.assertGreaterEqual(claim.worst_slack, -1e-12)
        self.assertEqual(claim.n_samples, SAMPLES)

    def test_broken_constants_are_caught(self):
        broken = CordesConstants(c1=0.0, c2=0.0, alpha=1.0, beta=1.0)
        report = cordes_claim_sample(broken, 1000, seed=0)
        self.assertEqual(report.violations, 1000)

    def test_sampling_is_reproducible_and_independent_of_workers(self):
        constants = cordes_constants(1.0, 2.0)
        config = Config(cordes_chunk=3000)
        serial = cordes_claim_sample(constants, 10_000, 3, Config(cordes_chunk=3000, cordes_workers=1))
        parallel = cordes_claim_sample(constants, 10_000, 3, config)
        self.assertEqual(serial, parallel)
        other = cordes_claim_sample(constants, 10_000, 4, config)
        self.assertNotEqual(serial.worst_slack, other.worst_slack)

    def test_needs_samples(self):
        with self.assertRaises(DomainError):
            cordes_claim_sample(cordes_constants(1.0, 1.0), 0)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(min_value=-10.0, max_value=10.0), min_size=3, max_size=3),
           st.floats(min_value=0.0, max_value=2.0 * math.pi),
           st.floats(min_value=0.0, max_value=1.0))
    def test_claim_holds_pointwise(self, entries, angle, fraction):
        constants = cordes_constants(0.5, 2.0)
        w11, w22, w12 = entries
        W = np.array([[w11, w12], [w12, w22]])
        A = (constants.alpha - 1.0) + fraction * (constants.beta - constants.alpha)
        v = np.array([math.cos(angle), math.sin(angle)])
        a = np.eye(2) + A * np.outer(v, v)
        scale = float(np.sum(W * W)) + constants.c2 * float(np.sum(a * W)) ** 2 + 1.0
        self.assertGreaterEqual(cordes_claim_slack(W, a, constants.c1, constants.c2) / scale, -1e-9)


if __name__ == "__main__":
    unittest.main()
