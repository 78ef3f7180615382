import logging
import math
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from src.aharmonic_lab import (
    DomainError,
    Profile,
    ProfileContext,
    Topology,
    VERDICT_NAMES,
    VerdictStatus,
    evaluate_verdicts,
)
from src.aharmonic_lab.verdicts import (
    log_convexity_verdict,
    lorentz_verdict,
    minimal_4pi2_verdict,
    pinched_bound_verdict,
    power_convexity_verdict,
)


logging.disable(logging.CRITICAL)

T = np.linspace(0.1, 1.0, 12)


def exponential_profile(context=None):
    """Circles of the flat annulus: L = 2 pi e^t, log-affine."""
    L = 2.0 * math.pi * np.exp(T)
    return Profile.from_arrays(T, L, L, L, context=context)


class TestLogConvexity(unittest.TestCase):

    def test_log_affine_profile_passes_with_zero_margin(self):
        verdict = log_convexity_verdict(exponential_profile())
        self.assertEqual(verdict.status, VerdictStatus.PASS)
        self.assertAlmostEqual(verdict.margin, 0.0, places=12)
        self.assertEqual(len(verdict.sample_margins), T.size)

    def test_concave_profile_fails(self):
        L = 10.0 - T ** 2
        profile = Profile.from_arrays(T, L, -2.0 * T, np.full_like(T, -2.0))
        verdict = log_convexity_verdict(profile)
        self.assertEqual(verdict.status, VerdictStatus.FAIL)
        self.assertLess(verdict.margin, 0.0)

    def test_positive_curvature_is_not_applicable(self):
        verdict = log_convexity_verdict(exponential_profile(ProfileContext(curvature_max=1.0)))
        self.assertEqual(verdict.status, VerdictStatus.NOT_APPLICABLE)
        self.assertIsNone(verdict.margin)
        self.assertFalse(verdict.hypotheses_met["curvature_nonpositive"])

    def test_beta_other_than_one_is_not_applicable(self):
        verdict = log_convexity_verdict(exponential_profile(ProfileContext(beta=2.0)))
        self.assertEqual(verdict.status, VerdictStatus.NOT_APPLICABLE)

    def test_unknown_source(self):
        with self.assertRaises(DomainError):
            log_convexity_verdict(exponential_profile(), source="spline")

    @settings(max_examples=50, deadline=None)
    @given(st.floats(min_value=-0.5, max_value=0.5), st.floats(min_value=0.0, max_value=0.1),
           st.floats(min_value=0.0, max_value=0.1))
    def test_raising_tol_never_turns_pass_into_fail(self, bend, tol, extra):
        L = 2.0 * math.pi * np.exp(T + bend * T ** 2)
        L1 = L * (1.0 + 2.0 * bend * T)
        L2 = L * ((1.0 + 2.0 * bend * T) ** 2 + 2.0 * bend)
        profile = Profile.from_arrays(T, L, L1, L2)
        low = log_convexity_verdict(profile, tol=tol)
        high = log_convexity_verdict(profile, tol=tol + extra)
        if low.status == VerdictStatus.PASS:
            self.assertEqual(high.status, VerdictStatus.PASS)
        self.assertEqual(low.margin, high.margin)


class TestPowerConvexity(unittest.TestCase):

    def test_convex_power_passes(self):
        L = (1.0 + T) ** 4
        context = ProfileContext(model_name="p_harmonic", alpha=2.0, beta=2.0)
        profile = Profile.from_arrays(T, L, 4.0 * (1.0 + T) ** 3, 12.0 * (1.0 + T) ** 2, context=context)
        verdict = power_convexity_verdict(profile)
        self.assertEqual(verdict.status, VerdictStatus.PASS)
        self.assertGreater(verdict.margin, 0.0)
        self.assertIn("exponent m = 0.5", verdict.notes[0])

    def test_beta_one_is_not_applicable(self):
        self.assertEqual(power_convexity_verdict(exponential_profile()).status, VerdictStatus.NOT_APPLICABLE)


class TestMinimalSurfaceBound(unittest.TestCase):

    def context(self, **changes):
        values = dict(model_name="minimal_surface", minimal_growth=True, topology=Topology.ANNULUS_IN_DISK)
        values.update(changes)
        return ProfileContext(**values)

    def test_catenoid_profile_is_sharp(self):
        L = 2.0 * math.pi * np.cosh(T)
        profile = Profile.from_arrays(T, L, 2.0 * math.pi * np.sinh(T), L, context=self.context())
        verdict = minimal_4pi2_verdict(profile)
        self.assertEqual(verdict.status, VerdictStatus.PASS)
        self.assertAlmostEqual(verdict.margin, 0.0, places=10)

    def test_flat_circles_fail_the_bound(self):
        verdict = minimal_4pi2_verdict(exponential_profile(self.context()))
        self.assertEqual(verdict.status, VerdictStatus.FAIL)
        self.assertAlmostEqual(verdict.margin, -1.0, places=10)

    def test_cylinder_is_not_applicable(self):
        profile = exponential_profile(self.context(topology=Topology.CYLINDER))
        self.assertEqual(minimal_4pi2_verdict(profile).status, VerdictStatus.NOT_APPLICABLE)


class TestLorentzBound(unittest.TestCase):

    def test_arcsinh_profile_passes(self):
        context = ProfileContext(model_name="maximal_lorentz", gradient_max=0.9, spacelike_cap=0.995)
        L = 2.0 * math.pi * np.sinh(T)
        profile = Profile.from_arrays(T, L, 2.0 * math.pi * np.cosh(T), L, context=context)
        verdict = lorentz_verdict(profile)
        self.assertEqual(verdict.status, VerdictStatus.PASS)
        self.assertGreaterEqual(verdict.margin, 0.0)

    def test_timelike_gradient_is_not_applicable(self):
        context = ProfileContext(model_name="maximal_lorentz", gradient_max=0.999, spacelike_cap=0.995)
        verdict = lorentz_verdict(exponential_profile(context))
        self.assertEqual(verdict.status, VerdictStatus.NOT_APPLICABLE)
        self.assertFalse(verdict.hypotheses_met["spacelike"])


class TestPinchedBound(unittest.TestCase):

    def test_requires_attestation(self):
        verdict = pinched_bound_verdict(exponential_profile(), 1.0, 1.0, 1.0, 2.0)
        self.assertEqual(verdict.status, VerdictStatus.NOT_APPLICABLE)
        self.assertEqual(verdict.hypotheses_met, {"attested": False})

    def test_zero_pinching_reduces_to_log_convexity(self):
        verdict = pinched_bound_verdict(exponential_profile(), 1.0, 0.0, 1.0, 2.0, attested=True)
        self.assertEqual(verdict.status, VerdictStatus.PASS)

    def test_invalid_constants(self):
        with self.assertRaises(DomainError):
            pinched_bound_verdict(exponential_profile(), 0.5, 1.0, 1.0, 2.0, attested=True)
        t = np.linspace(0.0, 1.0, 12)
        profile = Profile.from_arrays(t, np.exp(t), np.exp(t), np.exp(t))
        with self.assertRaises(DomainError):
            pinched_bound_verdict(profile, 1.0, 1.0, 1.0, 2.0, attested=True)


class TestEvaluateVerdicts(unittest.TestCase):

    def test_fixed_order_and_selection(self):
        verdicts = evaluate_verdicts(exponential_profile())
        self.assertEqual(tuple(v.name for v in verdicts), VERDICT_NAMES)
        subset = evaluate_verdicts(exponential_profile(), names=("lorentz", "log_convexity"))
        self.assertEqual([v.name for v in subset], ["lorentz", "log_convexity"])

    def test_unknown_name(self):
        with self.assertRaises(DomainError):
            evaluate_verdicts(exponential_profile(), names=("bogus",))

    def test_serialization(self):
        payload = evaluate_verdicts(exponential_profile(), names=("log_convexity",))[0].to_dict()
        self.assertEqual(payload["status"], "pass")
        self.assertEqual(set(payload), {"name", "status", "margin", "hypotheses_met", "notes", "sample_margins"})


if __name__ == "__main__":
    unittest.main()
