"""Convexity verdicts on a level-length profile.

Every verdict first checks its hypotheses. If one is not met the verdict
is ``not_applicable`` with no margin. Otherwise the margin is the smallest
normalized per-sample value of the inequality, and the verdict passes
when margin >= -tol. Raising tol can therefore only turn a fail into a pass.
"""
from __future__ import annotations

import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.config import Config
from .models import DomainError, Profile, Topology, Verdict, VerdictStatus

logger = logging.getLogger(__name__)

FOUR_PI2 = 4.0 * math.pi ** 2


def _decide(name: str, values: np.ndarray, scale: np.ndarray, tol: float,
            hypotheses: Dict[str, bool], notes: Sequence[str] = ()) -> Verdict:
    if not all(hypotheses.values()):
        missing = [key for key, ok in hypotheses.items() if not ok]
        logger.debug(f"{name}: not applicable, unmet {missing}")
        return Verdict(name=name, status=VerdictStatus.NOT_APPLICABLE, margin=None,
                       hypotheses_met=hypotheses, notes=tuple(notes))
    margins = values / np.maximum(scale, np.finfo(float).tiny)
    margin = float(np.min(margins))
    status = VerdictStatus.PASS if margin >= -tol else VerdictStatus.FAIL
    logger.debug(f"{name}: {status.value}, margin {margin:.3e}")
    return Verdict(name=name, status=status, margin=margin, hypotheses_met=hypotheses,
                   notes=tuple(notes), sample_margins=tuple(float(m) for m in margins))


def _common_hypotheses(profile: Profile, config: Config) -> Dict[str, bool]:
    context = profile.context
    return {
        "curvature_nonpositive": context.curvature_max <= config.curvature_tol,
        "structure_condition": context.alpha_realized > 0.0 and math.isfinite(context.beta_realized),
    }


def log_convexity_verdict(profile: Profile, tol: Optional[float] = None, source: str = "coarea",
                          config: Optional[Config] = None) -> Verdict:
    """(ln L)'' >= 0, i.e. L L'' - L'^2 >= 0, for models with beta = 1."""
    if config is None:
        config = Config()
    tol = config.verdict_tol if tol is None else tol
    L1, L2 = profile.derivatives(source)
    L = profile.L
    hypotheses = {"beta_equals_one": abs(profile.context.beta - 1.0) <= config.beta_one_tol}
    hypotheses.update(_common_hypotheses(profile, config))
    values = L * L2 - L1 ** 2
    scale = np.maximum(np.maximum(L * np.abs(L2), L1 ** 2), FOUR_PI2)
    return _decide("log_convexity", values, scale, tol, hypotheses)


def power_convexity_verdict(profile: Profile, beta: Optional[float] = None, tol: Optional[float] = None,
                            source: str = "coarea", config: Optional[Config] = None) -> Verdict:
    """(L^m / m)'' >= 0 with m = (beta - 1)/beta, for beta != 1.

    (L^m/m)'' = L^(m-2) (L L'' - L'^2/beta), so the sign is that of the bracket.
    """
    if config is None:
        config = Config()
    tol = config.verdict_tol if tol is None else tol
    beta = profile.context.beta if beta is None else float(beta)
    L1, L2 = profile.derivatives(source)
    L = profile.L
    hypotheses = {"beta_not_one": abs(beta - 1.0) > config.beta_one_tol and beta > 0.0}
    hypotheses.update(_common_hypotheses(profile, config))
    values = L * L2 - L1 ** 2 / beta
    scale = np.maximum(np.maximum(L * np.abs(L2), L1 ** 2 / beta), FOUR_PI2)
    notes = [f"exponent m = {(beta - 1.0) / beta:.6g}"] if beta > 0.0 else []
    return _decide("power_convexity", values, scale, tol, hypotheses, notes)


def minimal_4pi2_verdict(profile: Profile, tol: Optional[float] = None, source: str = "coarea",
                         config: Optional[Config] = None) -> Verdict:
    """L L'' - L'^2 >= 4 pi^2 on annuli in non-positively curved disks."""
    if config is None:
        config = Config()
    tol = config.verdict_tol if tol is None else tol
    L1, L2 = profile.derivatives(source)
    L = profile.L
    hypotheses = {
        "annulus_topology": profile.context.topology == Topology.ANNULUS_IN_DISK,
        "minimal_growth": bool(profile.context.minimal_growth),
    }
    hypotheses.update(_common_hypotheses(profile, config))
    values = L * L2 - L1 ** 2 - FOUR_PI2
    return _decide("minimal_4pi2", values, np.full_like(L, FOUR_PI2), tol, hypotheses)


def lorentz_verdict(profile: Profile, tol: Optional[float] = None, source: str = "coarea",
                    config: Optional[Config] = None) -> Verdict:
    """L L'' >= (L' + integral of k)^2 for spacelike maximal-surface solutions."""
    if config is None:
        config = Config()
    tol = config.verdict_tol if tol is None else tol
    L1, L2 = profile.derivatives(source)
    L = profile.L
    context = profile.context
    hypotheses = {
        "maximal_surface_model": context.model_name == "maximal_lorentz",
        "spacelike": context.gradient_max < min(1.0, context.spacelike_cap),
    }
    hypotheses.update(_common_hypotheses(profile, config))
    values = L * L2 - (L1 + profile.k_integral) ** 2
    scale = np.maximum(L * np.abs(L2), FOUR_PI2)
    return _decide("lorentz", values, scale, tol, hypotheses)


def pinched_bound_verdict(profile: Profile, kappa1: float, kappa2: float, R_ball: float, p: float,
                          tol: Optional[float] = None, attested: bool = False, source: str = "coarea",
                          config: Optional[Config] = None) -> Verdict:
    """Quantitative convexity under pinched curvature -kappa1 <= K <= -kappa2.

    p = 2:  (ln L)'' >= (kappa2/kappa1) / t^2
    p != 2: ((p-1)/(p-2) L^((p-2)/(p-1)))'' >= R^2/(1+R) * kappa2/(1 + R kappa1) * L^(-1/(p-1)) / t^2

    The hypotheses (a positive harmonic extension on a doubled ball) cannot
    be checked numerically, so the caller must attest them.
    """
    if config is None:
        config = Config()
    tol = config.verdict_tol if tol is None else tol
    notes = ["the bound holds up to an unspecified multiplicative constant; margins are indicative"]
    if not attested:
        return Verdict(name="pinched_bound", status=VerdictStatus.NOT_APPLICABLE, margin=None,
                       hypotheses_met={"attested": False}, notes=tuple(notes))
    if np.any(profile.t <= 0.0):
        raise DomainError("the pinched bound needs t > 0 on every sample")
    if not (kappa1 >= kappa2 >= 0.0) or not R_ball > 0.0 or not p > 1.0:
        raise DomainError("need kappa1 >= kappa2 >= 0, R > 0 and p > 1")
    if kappa2 > 0.0 and kappa1 <= 0.0:
        raise DomainError("kappa1 must be positive when kappa2 is")

    L1, L2 = profile.derivatives(source)
    L, t = profile.L, profile.t
    if abs(p - 2.0) <= config.beta_one_tol:
        lhs = (L * L2 - L1 ** 2) / L ** 2
        rhs = np.zeros_like(t) if kappa2 == 0.0 else (kappa2 / kappa1) / t ** 2
    else:
        m = (p - 2.0) / (p - 1.0)
        lhs = L ** (m - 2.0) * (L * L2 - L1 ** 2 / (p - 1.0))
        factor = 0.0 if kappa2 == 0.0 else R_ball ** 2 / (1.0 + R_ball) * kappa2 / (1.0 + R_ball * kappa1)
        rhs = factor * L ** (-1.0 / (p - 1.0)) / t ** 2
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), np.finfo(float).tiny)
    hypotheses = {"attested": True}
    hypotheses.update(_common_hypotheses(profile, config))
    return _decide("pinched_bound", lhs - rhs, scale, tol, hypotheses, notes)


VERDICT_NAMES = ("log_convexity", "power_convexity", "minimal_4pi2", "lorentz", "pinched_bound")


def evaluate_verdicts(profile: Profile, names: Sequence[str] = VERDICT_NAMES, tol: Optional[float] = None,
                      source: str = "coarea", pinched: Optional[dict] = None,
                      config: Optional[Config] = None) -> List[Verdict]:
    """Evaluate the selected verdicts in a fixed order."""
    verdicts = []
    for name in names:
        if name == "log_convexity":
            verdicts.append(log_convexity_verdict(profile, tol, source, config))
        elif name == "power_convexity":
            verdicts.append(power_convexity_verdict(profile, None, tol, source, config))
        elif name == "minimal_4pi2":
            verdicts.append(minimal_4pi2_verdict(profile, tol, source, config))
        elif name == "lorentz":
            verdicts.append(lorentz_verdict(profile, tol, source, config))
        elif name == "pinched_bound":
            options = dict(pinched or {})
            verdicts.append(pinched_bound_verdict(
                profile,
                kappa1=float(options.get("kappa1", 1.0)),
                kappa2=float(options.get("kappa2", 0.0)),
                R_ball=float(options.get("R", 1.0)),
                p=float(options.get("p", 2.0)),
                tol=tol,
                attested=bool(options.get("attested", False)),
                source=source,
                config=config,
            ))
        else:
            raise DomainError(f"unknown verdict '{name}'")
    return verdicts
