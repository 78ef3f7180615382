import logging
import math
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from src.config import Config
from src.aharmonic_lab import (
    DomainError,
    StructureViolation,
    alternate_system_ratio,
    conjugate_model,
    cordes_constants,
    elliptic_coefficients,
    flux_map,
    half_flux_map,
    invert_flux,
    invert_half_flux,
    maximal_lorentz,
    minimal_surface,
    model_from_spec,
    p_harmonic,
    riccati_gamma,
    satisfies_minimal_growth,
    structure_report,
    subsonic_gas,
    valtorta,
)


logging.disable(logging.CRITICAL)


class TestBuiltinModels(unittest.TestCase):

    def test_p_harmonic_has_constant_elasticity(self):
        model = p_harmonic(3.0)
        s = np.logspace(-4, 3, 50)
        np.testing.assert_allclose(model.elasticity_at(s), 1.0)
        self.assertEqual((model.alpha, model.beta), (2.0, 2.0))

    def test_p_harmonic_rejects_p_not_above_one(self):
        with self.assertRaises(DomainError):
            p_harmonic(1.0)

    def test_minimal_surface_flux_is_bounded_by_one(self):
        model = minimal_surface()
        values = flux_map(model, np.logspace(-3, 3, 40))
        self.assertTrue(np.all(values < 1.0))
        self.assertEqual(model.flux_sup, 1.0)

    def test_subsonic_gas_freezes_beyond_cap(self):
        model = subsonic_gas(3.0)
        cap = 2.0 / (3.0 + 1.0)
        self.assertAlmostEqual(float(model.value(cap)), float(model.value(10.0)), places=14)
        self.assertEqual(float(model.elasticity_at(2.0)), 0.0)

    def test_maximal_lorentz_cap_range(self):
        with self.assertRaises(DomainError):
            maximal_lorentz(1.0)
        model = maximal_lorentz(0.9)
        self.assertAlmostEqual(model.beta, 1.0 / (1.0 - 0.81))

    def test_model_from_spec_builds_conjugate(self):
        model = model_from_spec({"name": "conjugate", "params": {"of": {"name": "p_harmonic", "params": {"p": 3}}}})
        self.assertAlmostEqual(model.alpha, 0.5)
        self.assertAlmostEqual(model.beta, 0.5)
        self.assertEqual(model.to_spec()["name"], "conjugate")

    def test_model_from_spec_rejects_unknown_names_and_params(self):
        with self.assertRaises(DomainError):
            model_from_spec({"name": "no_such_model"})
        with self.assertRaises(DomainError):
            model_from_spec({"name": "p_harmonic", "params": {"q": 3}})
        with self.assertRaises(DomainError):
            model_from_spec({"params": {}})


class TestStructure(unittest.TestCase):

    def test_p_harmonic_structure(self):
        report = structure_report(p_harmonic(4.0))
        self.assertAlmostEqual(report.alpha_hat, 3.0)
        self.assertAlmostEqual(report.beta_hat, 3.0)
        self.assertTrue(report.holds_A)
        self.assertTrue(report.within_declared)
        self.assertEqual(report.a2_class, "upper-bounded")

    def test_minimal_surface_is_bounded_near_zero(self):
        report = structure_report(minimal_surface())
        self.assertEqual(report.a2_class, "both")
        self.assertTrue(report.holds_Aprime)
        self.assertTrue(report.within_declared)

    def test_zigzag_model_is_neither_bounded_above_nor_below(self):
        model = valtorta()
        report = structure_report(model)
        self.assertEqual(report.a2_class, "neither")
        self.assertGreaterEqual(report.alpha_hat, 0.5 - 1e-9)
        self.assertLessEqual(report.beta_hat, 3.0 + 1e-9)

    def test_short_s_grid_is_rejected(self):
        with self.assertRaises(DomainError):
            structure_report(p_harmonic(2.0), s_grid=np.linspace(0.1, 10.0, 20))

    def test_minimal_growth(self):
        s = np.linspace(0.0, 5.0, 30)
        self.assertTrue(satisfies_minimal_growth(minimal_surface(), s))
        self.assertFalse(satisfies_minimal_growth(p_harmonic(2.0), s[1:]))


class TestFluxMaps(unittest.TestCase):

    def test_closed_form_inverse(self):
        model = p_harmonic(3.0)
        s = np.array([0.0, 0.5, 2.0, 7.0])
        np.testing.assert_allclose(invert_flux(model, flux_map(model, s)), s, rtol=1e-12)

    def test_bisection_inverse_for_models_without_closed_form(self):
        model = subsonic_gas(1.4)
        s = np.array([0.05, 0.3, 0.8, 3.0])
        np.testing.assert_allclose(invert_flux(model, flux_map(model, s)), s, rtol=1e-9)

    def test_half_flux_inverse(self):
        model = valtorta()
        s = np.array([1e-3, 0.2, 1.5])
        np.testing.assert_allclose(invert_half_flux(model, half_flux_map(model, s)), s, rtol=1e-9)

    def test_out_of_range_flux(self):
        model = minimal_surface()
        with self.assertRaises(DomainError):
            invert_flux(model, 1.5)
        relaxed = invert_flux(model, np.array([0.5, 1.5]), strict=False)
        self.assertTrue(math.isfinite(relaxed[0]))
        self.assertTrue(math.isnan(relaxed[1]))
        with self.assertRaises(DomainError):
            invert_flux(model, -0.1)

    def test_scalar_in_scalar_out(self):
        self.assertIsInstance(flux_map(p_harmonic(2.0), 0.5), float)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(min_value=1.2, max_value=6.0), st.floats(min_value=1e-3, max_value=50.0))
    def test_flux_roundtrip_property(self, p, s):
        model = p_harmonic(p)
        self.assertAlmostEqual(float(invert_flux(model, flux_map(model, s))) / s, 1.0, places=9)


class TestConjugateModel(unittest.TestCase):

    def test_structure_constants_swap(self):
        model = valtorta()
        conjugate = conjugate_model(model)
        self.assertAlmostEqual(conjugate.alpha, 1.0 / 3.0)
        self.assertAlmostEqual(conjugate.beta, 2.0)

    def test_conjugating_twice_gives_back_the_model(self):
        model = p_harmonic(3.0)
        twice = conjugate_model(conjugate_model(model))
        s = np.array([0.1, 0.7, 2.0])
        np.testing.assert_allclose(twice.value(s), model.value(s), rtol=1e-8)

    def test_elasticity_duality(self):
        model = subsonic_gas(2.0)
        conjugate = conjugate_model(model)
        s = np.linspace(0.1, 0.6, 11)
        D = model.elasticity_at(s)
        np.testing.assert_allclose(conjugate.elasticity_at(flux_map(model, s)), -D / (1.0 + D), atol=1e-9)


class TestCoefficients(unittest.TestCase):

    def test_p_two_has_vanishing_coefficients(self):
        coefficients = elliptic_coefficients(0.0)
        self.assertEqual(coefficients.abs_sum, 0.0)

    def test_coefficients_stay_below_one(self):
        for D in (-0.9, -0.5, 0.5, 3.0, 50.0):
            self.assertLess(elliptic_coefficients(D).ellipticity_bound, 1.0)

    def test_alternate_ratio(self):
        self.assertAlmostEqual(alternate_system_ratio(2.0), 0.5)
        with self.assertRaises(StructureViolation):
            alternate_system_ratio(-1.0)

    def test_cordes_constants(self):
        constants = cordes_constants(1.0, 1.0, config=Config(cordes_margin=1.5))
        self.assertAlmostEqual(constants.c1, 1.5)
        self.assertAlmostEqual(constants.c2, (1.5 ** 2 - 1.0) / (3.0 - 2.0))
        with self.assertRaises(DomainError):
            cordes_constants(2.0, 1.0)
        with self.assertRaises(DomainError):
            cordes_constants(1.0, 1.0, c1=0.5)

    def test_riccati_gamma(self):
        self.assertAlmostEqual(riccati_gamma(2.0, 2.0, 1.0), 1.0)
        self.assertAlmostEqual(riccati_gamma(4.0, 3.0, 2.0), 0.8)
        self.assertAlmostEqual(riccati_gamma(4.0, 3.0, 7.0), 0.8)
        self.assertNotAlmostEqual(riccati_gamma(4.0, 2.0, 2.0), riccati_gamma(4.0, 2.0, 4.0))

    def test_riccati_gamma_below_quadratic_growth(self):
        # 2p/(3p - 2) = 1.2 and exponent -0.75 at p = 1.5, q = 1
        self.assertAlmostEqual(riccati_gamma(1.5, 1.0, 1.0), 1.2)
        self.assertAlmostEqual(riccati_gamma(1.5, 1.0, 16.0), 1.2 * 16.0 ** -0.75)
        self.assertAlmostEqual(riccati_gamma(2.0, 1.0, 4.0), 0.25)
        # q = 1 + p/2 removes the s dependence
        self.assertAlmostEqual(riccati_gamma(1.5, 1.75, 0.3), riccati_gamma(1.5, 1.75, 30.0))

    def test_riccati_gamma_domain(self):
        for p, q, s in ((1.0, 2.0, 1.0), (0.5, 2.0, 1.0), (2.0, 0.99, 1.0), (2.0, 2.0, 0.0)):
            with self.subTest(p=p, q=q, s=s):
                with self.assertRaises(DomainError):
                    riccati_gamma(p, q, s)


if __name__ == "__main__":
    unittest.main()
