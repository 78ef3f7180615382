"""Diffusivity models and the scalar maps built from them.

A model is a :class:`DiffusivityModel`. This module builds the builtin
families, checks their structure on a logarithmic grid, inverts the flux
map and forms the conjugate model.
"""
from __future__ import annotations

import logging
import math
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from src.config import Config
from .models import (
    CordesConstants,
    DiffusivityModel,
    DomainError,
    EllipticCoefficients,
    EvaluationError,
    StructureReport,
    StructureViolation,
)

logger = logging.getLogger(__name__)


def _scalar_or_array(result: np.ndarray, like) -> Any:
    if np.ndim(like) == 0:
        return float(np.asarray(result).reshape(-1)[0])
    return result


# ---------------------------------------------------------------------------
# Builtin families
# ---------------------------------------------------------------------------

def p_harmonic(p: float) -> DiffusivityModel:
    """a(s) = s^(p-2); 1 + D = p - 1 everywhere."""
    if not p > 1.0:
        raise DomainError(f"p-harmonic model needs p > 1, got {p}")
    p = float(p)
    exponent = p - 2.0

    def a(s):
        with np.errstate(divide="ignore", over="ignore"):
            return np.power(s, exponent)

    def a_prime(s):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return exponent * np.power(s, exponent - 1.0)

    def log_a(s):
        with np.errstate(divide="ignore"):
            return exponent * np.log(s)

    def flux(s):
        with np.errstate(over="ignore"):
            return np.power(s, p - 1.0)

    def flux_inverse(w):
        return np.power(w, 1.0 / (p - 1.0))

    return DiffusivityModel(
        name="p_harmonic",
        a=a,
        alpha=p - 1.0,
        beta=p - 1.0,
        params={"p": p},
        a_prime=a_prime,
        log_a=log_a,
        elasticity=lambda s: np.full(np.shape(s), exponent),
        flux=flux,
        flux_inverse=flux_inverse,
    )


def minimal_surface(cap: float = 1e3) -> DiffusivityModel:
    """a(s) = (1 + s^2)^(-1/2).

    alpha is only positive on s <= cap, hence the declared 1/(1 + cap^2).
    """
    if not cap > 0.0:
        raise DomainError(f"minimal surface cap must be positive, got {cap}")

    def a(s):
        return 1.0 / np.sqrt(1.0 + np.square(s))

    def flux_inverse(w):
        with np.errstate(divide="ignore", invalid="ignore"):
            return w / np.sqrt(1.0 - np.square(w))

    return DiffusivityModel(
        name="minimal_surface",
        a=a,
        alpha=1.0 / (1.0 + cap * cap),
        beta=1.0,
        params={"cap": float(cap)},
        a_prime=lambda s: -s * np.power(1.0 + np.square(s), -1.5),
        log_a=lambda s: -0.5 * np.log1p(np.square(s)),
        elasticity=lambda s: -np.square(s) / (1.0 + np.square(s)),
        flux=lambda s: s / np.sqrt(1.0 + np.square(s)),
        flux_inverse=flux_inverse,
        flux_sup=1.0,
    )


def subsonic_gas(gamma: float) -> DiffusivityModel:
    """a(s) = (1 - (gamma-1)/2 s^2)^(1/(gamma-1)), frozen beyond s = 2/(gamma+1)."""
    if not gamma > 1.0:
        raise DomainError(f"subsonic gas model needs gamma > 1, got {gamma}")
    gamma = float(gamma)
    k = 0.5 * (gamma - 1.0)
    s_cap = 2.0 / (gamma + 1.0)

    def log_a(s):
        sc = np.minimum(s, s_cap)
        return np.log1p(-k * np.square(sc)) / (gamma - 1.0)

    def elasticity(s):
        s = np.asarray(s, dtype=float)
        sc = np.minimum(s, s_cap)
        return np.where(s < s_cap, -np.square(sc) / (1.0 - k * np.square(sc)), 0.0)

    def a(s):
        return np.exp(log_a(s))

    def a_prime(s):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(s > 0, a(s) * elasticity(s) / s, 0.0)

    return DiffusivityModel(
        name="subsonic_gas",
        a=a,
        alpha=(gamma * gamma - 1.0) / (gamma * gamma + 3.0),
        beta=1.0,
        params={"gamma": gamma},
        a_prime=a_prime,
        log_a=log_a,
        elasticity=elasticity,
    )


def maximal_lorentz(cap: float = 0.995) -> DiffusivityModel:
    """a(s) = (1 - s^2)^(-1/2) on spacelike gradients, frozen beyond s = cap."""
    if not 0.0 < cap < 1.0:
        raise DomainError(f"maximal surface cap must lie in (0, 1), got {cap}")
    cap = float(cap)
    a_cap = 1.0 / math.sqrt(1.0 - cap * cap)
    w_cap = cap * a_cap

    def log_a(s):
        return -0.5 * np.log1p(-np.square(np.minimum(s, cap)))

    def elasticity(s):
        s = np.asarray(s, dtype=float)
        sc = np.minimum(s, cap)
        return np.where(s < cap, np.square(sc) / (1.0 - np.square(sc)), 0.0)

    def a(s):
        return np.exp(log_a(s))

    def a_prime(s):
        s = np.asarray(s, dtype=float)
        return np.where(s < cap, s * np.power(1.0 - np.square(np.minimum(s, cap)), -1.5), 0.0)

    def flux_inverse(w):
        w = np.asarray(w, dtype=float)
        return np.where(w <= w_cap, w / np.sqrt(1.0 + np.square(w)), w / a_cap)

    return DiffusivityModel(
        name="maximal_lorentz",
        a=a,
        alpha=1.0,
        beta=1.0 / (1.0 - cap * cap),
        params={"cap": cap},
        a_prime=a_prime,
        log_a=log_a,
        elasticity=elasticity,
        flux=lambda s: s * a(s),
        flux_inverse=flux_inverse,
    )


class _ZigZagLogDiffusivity:
    """Smoothed zig-zag log a(s) = f(-log s) oscillating between -t and sqrt(t).

    The piecewise-linear skeleton starts at t = 0 with slope 1/2 and turns
    to slope -2 whenever it meets rho*sqrt(t), and back to 1/2 at -rho*t.
    Corners are blended by a quintic smoothstep on windows of width
    0.01*max(t_k, 1), so f' stays in [-2, 1/2] and 1 + D lies in [1/2, 3].
    """

    RISE = 0.5
    FALL = -2.0

    def __init__(self, n_corners: int, jitter: float, seed: int):
        rng = np.random.default_rng(seed)
        corners_t = [0.0]
        corners_f = [0.0]
        slopes = [self.RISE]
        while len(corners_t) < n_corners:
            t_k, f_k = corners_t[-1], corners_f[-1]
            rho = 1.0 - jitter * rng.uniform()
            if slopes[-1] == self.RISE:
                x = rho + math.sqrt(rho * rho - 2.0 * f_k + t_k)
                t_next = x * x
                slopes.append(self.FALL)
            else:
                t_next = (f_k + 2.0 * t_k) / (2.0 - rho)
                slopes.append(self.RISE)
            corners_f.append(f_k + slopes[-2] * (t_next - t_k))
            corners_t.append(t_next)
        self.t = np.asarray(corners_t)
        self.f = np.asarray(corners_f)
        # slope_in[k] enters corner k, slope_out[k] leaves it
        self.slope_out = np.asarray(slopes)
        self.slope_in = np.concatenate([[0.0], self.slope_out[:-1]])
        self.width = 0.01 * np.maximum(self.t, 1.0)

    @staticmethod
    def _smoothstep(x):
        return x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)

    @staticmethod
    def _smoothstep_integral(x):
        return x ** 6 - 3.0 * x ** 5 + 2.5 * x ** 4

    def _skeleton(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        k = np.searchsorted(self.t, t, side="right") - 1
        inside = k >= 0
        kk = np.clip(k, 0, None)
        value = np.where(inside, self.f[kk] + self.slope_out[kk] * (t - self.t[kk]), 0.0)
        slope = np.where(inside, self.slope_out[kk], 0.0)
        return value, slope

    def value(self, t: np.ndarray) -> np.ndarray:
        value, _ = self._skeleton(t)
        for k in range(self.t.size):
            w = self.width[k]
            mask = np.abs(t - self.t[k]) < w
            if not mask.any():
                continue
            start = self.t[k] - w
            base, _ = self._skeleton(np.array([start]))
            x = (t[mask] - start) / (2.0 * w)
            jump = self.slope_out[k] - self.slope_in[k]
            value[mask] = base[0] + 2.0 * w * (self.slope_in[k] * x + jump * self._smoothstep_integral(x))
        return value

    def slope(self, t: np.ndarray) -> np.ndarray:
        _, slope = self._skeleton(t)
        for k in range(self.t.size):
            w = self.width[k]
            mask = np.abs(t - self.t[k]) < w
            if not mask.any():
                continue
            x = (t[mask] - (self.t[k] - w)) / (2.0 * w)
            slope[mask] = self.slope_in[k] + (self.slope_out[k] - self.slope_in[k]) * self._smoothstep(x)
        return slope


def valtorta(n_corners: int = 10, jitter: float = 0.0, seed: int = 0) -> DiffusivityModel:
    """Bounded-structure diffusivity whose log a is neither bounded above nor below near 0."""
    if n_corners < 3:
        raise DomainError(f"zig-zag model needs at least 3 corners, got {n_corners}")
    if not 0.0 <= jitter < 1.0:
        raise DomainError(f"jitter must lie in [0, 1), got {jitter}")
    zigzag = _ZigZagLogDiffusivity(int(n_corners), float(jitter), int(seed))

    def log_a(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            t = np.atleast_1d(-np.log(s))
        return zigzag.value(t).reshape(s.shape)

    def elasticity(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            t = np.atleast_1d(-np.log(s))
        return -zigzag.slope(t).reshape(s.shape)

    def a(s):
        return np.exp(log_a(s))

    return DiffusivityModel(
        name="valtorta",
        a=a,
        alpha=0.5,
        beta=3.0,
        params={"n_corners": int(n_corners), "jitter": float(jitter), "seed": int(seed)},
        a_prime=lambda s: a(s) * elasticity(s) / np.asarray(s, dtype=float),
        log_a=log_a,
        elasticity=elasticity,
    )


BUILTIN_MODELS = {
    "p_harmonic": p_harmonic,
    "minimal_surface": minimal_surface,
    "subsonic_gas": subsonic_gas,
    "maximal_lorentz": maximal_lorentz,
    "valtorta": valtorta,
}


def model_from_spec(spec: Mapping[str, Any]) -> DiffusivityModel:
    """Build a model from ``{"name": ..., "params": {...}}``."""
    try:
        name = spec["name"]
    except (KeyError, TypeError) as e:
        raise DomainError(f"model spec needs a 'name': {spec!r}") from e
    params = dict(spec.get("params") or {})
    if name == "conjugate":
        if "of" not in params:
            raise DomainError("conjugate model spec needs params.of")
        return conjugate_model(model_from_spec(params["of"]))
    if name not in BUILTIN_MODELS:
        raise DomainError(f"unknown model '{name}', expected one of {sorted(BUILTIN_MODELS)} or 'conjugate'")
    try:
        return BUILTIN_MODELS[name](**params)
    except TypeError as e:
        raise DomainError(f"bad parameters for model '{name}': {e}") from e


# ---------------------------------------------------------------------------
# Structure
# ---------------------------------------------------------------------------

def default_s_grid(config: Optional[Config] = None) -> np.ndarray:
    if config is None:
        config = Config()
    return np.logspace(config.s_grid_log10_min, config.s_grid_log10_max, config.s_grid_points)


def _validate_s_grid(s_grid) -> np.ndarray:
    s = np.asarray(s_grid, dtype=float)
    if s.ndim != 1 or s.size < 2:
        raise DomainError("s-grid must be a 1-D array with at least two points")
    if np.any(s <= 0.0) or np.any(np.diff(s) <= 0.0):
        raise DomainError("s-grid must be positive and strictly increasing")
    if s[0] > 1e-6 or s[-1] < 1e3:
        raise DomainError(f"s-grid must span [1e-6, 1e3], got [{s[0]:.3e}, {s[-1]:.3e}]")
    return s


def _check_finite(values: np.ndarray, s: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        raise EvaluationError(f"non-finite {what}", float(s[np.argmax(bad)]))


def _growth_class(log_values: np.ndarray, t: np.ndarray, growth: float) -> Tuple[bool, bool]:
    """(bounded above, bounded below) guesses for a function of t = -log s on t >= 0."""
    total = float(t.max())
    split = math.sqrt(total) if total > 1.0 else 0.5 * total
    shallow = t <= split
    upper = float(log_values.max()) <= float(log_values[shallow].max()) + growth
    lower = float(log_values.min()) >= float(log_values[shallow].min()) - growth
    return upper, lower


def structure_report(model: DiffusivityModel, s_grid=None, config: Optional[Config] = None) -> StructureReport:
    """Realized structure constants and boundedness class of log a near zero.

    Works with log a and D directly, so models whose a under- or overflows
    on the grid are still classified.
    """
    if config is None:
        config = Config()
    s = default_s_grid(config) if s_grid is None else _validate_s_grid(s_grid)

    log_a = np.asarray(model.log_value(s), dtype=float)
    _check_finite(log_a, s, "log a")
    D = np.asarray(model.elasticity_at(s), dtype=float)
    _check_finite(D, s, "s a'/a")
    ratio = 1.0 + D
    alpha_hat = float(ratio.min())
    beta_hat = float(ratio.max())
    tol = config.structure_tol
    within = alpha_hat >= model.alpha - tol * max(1.0, model.alpha) and beta_hat <= model.beta + tol * max(1.0, model.beta)

    near_zero = s <= 1.0
    t = -np.log(s[near_zero])
    upper, lower = _growth_class(log_a[near_zero], t, config.boundedness_growth)
    if upper and lower:
        a2_class = "both"
    elif upper:
        a2_class = "upper-bounded"
    elif lower:
        a2_class = "lower-bounded"
    else:
        a2_class = "neither"

    # (A'): s a(s) -> 0 as s -> 0, i.e. log s + log a drifts to -inf.
    log_flux = log_a[near_zero] - t
    _, flux_bounded_below = _growth_class(log_flux, t, config.boundedness_growth)

    report = StructureReport(
        alpha_hat=alpha_hat,
        beta_hat=beta_hat,
        holds_A=alpha_hat > tol and np.isfinite(beta_hat),
        holds_Aprime=not flux_bounded_below,
        a2_class=a2_class,
        within_declared=bool(within),
        s_min=float(s[0]),
        s_max=float(s[-1]),
    )
    logger.debug(f"Structure of {model.name}: alpha_hat={alpha_hat:.6g}, beta_hat={beta_hat:.6g}, A2={a2_class}")
    return report


def satisfies_minimal_growth(model: DiffusivityModel, s, tol: float = 1e-9) -> bool:
    """1 + D(s) <= 1/(1 + s^2) on every given s."""
    s = np.asarray(s, dtype=float)
    ratio = 1.0 + model.elasticity_at(s)
    return bool(np.all(ratio <= 1.0 / (1.0 + np.square(s)) + tol))


# ---------------------------------------------------------------------------
# Flux maps
# ---------------------------------------------------------------------------

def flux_map(model: DiffusivityModel, s):
    """F(s) = a(s) s."""
    s_arr = np.asarray(s, dtype=float)
    values = model.flux(s_arr) if model.flux is not None else model.value(s_arr) * s_arr
    return _scalar_or_array(values, s)


def half_flux_map(model: DiffusivityModel, s):
    """A(s) = sqrt(a(s)) s."""
    s_arr = np.asarray(s, dtype=float)
    return _scalar_or_array(np.exp(0.5 * model.log_value(s_arr)) * s_arr, s)


def _invert_increasing(func, target: np.ndarray, upper: float, rtol: float, max_iter: int) -> np.ndarray:
    """Vectorized geometric bisection for func(x) = target, x > 0.

    Entries whose bracket cannot be established come back as NaN.
    """
    target = np.asarray(target, dtype=float)
    out = np.full(target.shape, np.nan)
    out[target == 0.0] = 0.0
    active = np.isfinite(target) & (target > 0.0)
    if not active.any():
        return out

    goal = target[active]
    ceiling = np.nextafter(upper, 0.0) if np.isfinite(upper) else np.inf
    hi = np.minimum(goal, ceiling)
    lo = hi.copy()
    failed = np.zeros(goal.shape, dtype=bool)

    with np.errstate(all="ignore"):
        for _ in range(2100):
            short = (func(hi) < goal) & ~failed
            if not short.any():
                break
            stuck = short & (hi >= ceiling)
            failed |= stuck
            grow = short & ~stuck
            hi[grow] = np.minimum(hi[grow] * 2.0, ceiling)
        for _ in range(2100):
            over = (func(lo) > goal) & ~failed
            if not over.any():
                break
            lo[over] *= 0.5
            failed |= lo <= 0.0

        for _ in range(max_iter):
            if np.all((hi - lo) <= rtol * hi):
                break
            mid = np.sqrt(lo * hi)
            below = func(mid) < goal
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)

    result = 0.5 * (lo + hi)
    result[failed | ~np.isfinite(result)] = np.nan
    out[active] = result
    return out


def invert_flux(model: DiffusivityModel, w, *, strict: bool = True, config: Optional[Config] = None):
    """F^-1(w) for w in [0, sup F).

    Uses the model's closed form when it has one, bracketed geometric
    bisection otherwise. With ``strict`` an out-of-range value raises
    DomainError, without it the entry becomes NaN.
    """
    if config is None:
        config = Config()
    w_arr = np.asarray(w, dtype=float)
    if np.any(w_arr < 0.0):
        raise DomainError("flux values must be non-negative")
    out_of_range = w_arr >= model.flux_sup
    if strict and np.any(out_of_range):
        raise DomainError(f"flux value {float(np.max(w_arr)):.6g} outside the range of F (sup {model.flux_sup:.6g})")

    if model.flux_inverse is not None:
        with np.errstate(all="ignore"):
            s = np.asarray(model.flux_inverse(np.where(out_of_range, 0.0, w_arr)), dtype=float)
    else:
        s = _invert_increasing(lambda x: flux_map(model, x), np.where(out_of_range, 0.0, w_arr),
                               model.domain_sup, config.invert_rtol, config.invert_max_iter)
    s = np.where(out_of_range, np.nan, s)
    if strict and np.any(np.isnan(s)):
        raise DomainError("flux inversion failed to bracket a root")
    return _scalar_or_array(s, w)


def invert_half_flux(model: DiffusivityModel, w, *, strict: bool = True, config: Optional[Config] = None):
    """A^-1(w) by bracketed geometric bisection."""
    if config is None:
        config = Config()
    w_arr = np.asarray(w, dtype=float)
    if np.any(w_arr < 0.0):
        raise DomainError("half-flux values must be non-negative")
    s = _invert_increasing(lambda x: half_flux_map(model, x), w_arr, model.domain_sup,
                           config.invert_rtol, config.invert_max_iter)
    if strict and np.any(np.isnan(s)):
        raise DomainError("half-flux value outside the range of A")
    return _scalar_or_array(s, w)


def conjugate_model(model: DiffusivityModel) -> DiffusivityModel:
    """b(t) = 1 / a(F^-1(t)), the diffusivity of the stream function.

    Structure constants swap as (1/beta, 1/alpha) and the conjugate flux is
    F^-1, so conjugating twice gives back a on the common domain.
    """
    if not model.alpha > 0.0:
        raise DomainError(f"model {model.name} does not satisfy the structure condition")

    def preimage(t):
        return invert_flux(model, t, strict=False)

    def log_b(t):
        return -model.log_value(preimage(t))

    def b(t):
        return np.exp(log_b(t))

    def elasticity(t):
        D = model.elasticity_at(preimage(t))
        return -D / (1.0 + D)

    def b_prime(t):
        return b(t) * elasticity(t) / np.asarray(t, dtype=float)

    def flux_inverse(w):
        return np.asarray(flux_map(model, w), dtype=float)

    return DiffusivityModel(
        name=f"conjugate({model.name})",
        a=b,
        alpha=1.0 / model.beta,
        beta=1.0 / model.alpha,
        params={"of": model.to_spec()},
        a_prime=b_prime,
        log_a=log_b,
        elasticity=elasticity,
        flux=lambda t: np.asarray(preimage(t), dtype=float),
        flux_inverse=flux_inverse,
        flux_sup=model.domain_sup,
        domain_sup=model.flux_sup,
        spec={"name": "conjugate", "params": {"of": model.to_spec()}},
    )


# ---------------------------------------------------------------------------
# Coefficients and constants
# ---------------------------------------------------------------------------

def elliptic_coefficient_fields(D) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(B, C, B_ratio) for every entry of D."""
    D = np.asarray(D, dtype=float)
    if np.any(~np.isfinite(D)) or np.any(D <= -1.0):
        raise StructureViolation(f"1 + D must be positive, got min D = {float(np.nanmin(D)):.6g}")
    B = D / (2.0 * (D + 2.0))
    C = -D / (3.0 * D + 4.0)
    B_ratio = D / (D + 4.0)
    return B, C, B_ratio


def elliptic_coefficients(D: float) -> EllipticCoefficients:
    B, C, B_ratio = (float(x) for x in elliptic_coefficient_fields(D))
    return EllipticCoefficients(
        D=float(D), B=B, C=C, B_ratio=B_ratio, abs_sum=abs(C + B_ratio) + abs(C - B_ratio),
    )


def alternate_system_ratio(D):
    """|B'/(1 - B')| for the system satisfied by a f, which equals |D/(D + 2)|."""
    D_arr = np.asarray(D, dtype=float)
    if np.any(D_arr <= -1.0):
        raise StructureViolation("1 + D must be positive")
    return _scalar_or_array(np.abs(D_arr / (D_arr + 2.0)), D)


def cordes_constants(alpha: float, beta: float, c1: Optional[float] = None,
                     config: Optional[Config] = None) -> CordesConstants:
    """Constants of the Cordes-type inequality used for W^{2,2} estimates.

    Without an explicit c1 the threshold (1 + beta^2)/(2 alpha) is scaled
    by the configured margin.
    """
    if config is None:
        config = Config()
    if not 0.0 < alpha <= beta:
        raise DomainError(f"need 0 < alpha <= beta, got alpha={alpha}, beta={beta}")
    threshold = (1.0 + beta * beta) / (2.0 * alpha)
    if c1 is None:
        c1 = config.cordes_margin * threshold
    elif not c1 > threshold:
        raise DomainError(f"c1 must exceed (1 + beta^2)/(2 alpha) = {threshold:.6g}, got {c1}")
    c2 = (c1 * c1 - 1.0) / (2.0 * c1 * alpha - 1.0 - beta * beta)
    return CordesConstants(c1=float(c1), c2=float(c2), alpha=float(alpha), beta=float(beta))


def riccati_gamma(p: float, q: float, s):
    """Boundary Riccati coefficient 2p/(3p - 2) * s^(q - 1 - p/2)."""
    if not p > 1.0:
        raise DomainError(f"the Riccati bound needs p > 1, got {p}")
    if not q >= 1.0:
        raise DomainError(f"the Riccati bound needs q >= 1, got {q}")
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0.0):
        raise DomainError("s must be positive")
    return _scalar_or_array(2.0 * p / (3.0 * p - 2.0) * np.power(s_arr, q - 1.0 - 0.5 * p), s)


def model_summary(model: DiffusivityModel) -> Dict[str, Any]:
    return {"spec": model.to_spec(), "alpha": model.alpha, "beta": model.beta}
