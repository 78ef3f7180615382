from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

ScalarMap = Callable[[np.ndarray], np.ndarray]
# Scalar and complex fields are plain (n_sigma, n_theta) arrays.
ScalarField = np.ndarray
ComplexField = np.ndarray


class LabError(Exception):
    """Base class for every error raised by the lab."""
    pass


class DomainError(LabError, ValueError):
    """Raised when an argument lies outside the domain of an operation."""
    pass


class EvaluationError(LabError):
    """Raised when a model returns a non-finite value."""

    def __init__(self, message: str, s: float):
        super().__init__(f"{message} (s={s:.6e})")
        self.s = s


class StructureViolation(LabError):
    """Raised when 1 + D(s) leaves (0, inf)."""
    pass


class InvalidMetricError(LabError):
    """Raised when the conformal factor is not finite and positive."""
    pass


class FieldShapeError(LabError, ValueError):
    """Raised when a field does not match its chart."""
    pass


class SolverError(LabError):
    """Raised when the Dirichlet solver stops without converging."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class OracleError(LabError):
    """Raised when the radial reference cannot be constructed."""
    pass


class LevelError(LabError):
    """Raised when a level set cannot be extracted."""
    pass


class CriticalProximityError(LabError):
    """Raised when |grad u| falls below the gradient floor where it is divided by."""

    def __init__(self, message: str, min_gradient: float, floor: float):
        super().__init__(f"{message}: min |grad u|_g = {min_gradient:.3e} < floor {floor:.3e}")
        self.min_gradient = min_gradient
        self.floor = floor


class StreamError(LabError):
    """Raised when the stream function reconstruction fails."""
    pass


class ConfigError(LabError):
    """Raised for malformed scenario or model files."""
    pass


class StageError(LabError):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class DiffusivityModel:
    """A diffusivity a: (0, inf) -> (0, inf) with its structure bounds.

    ``elasticity`` is D(s) = s a'(s) / a(s), so that 1 + D(s) is the
    quantity bounded by ``alpha`` and ``beta``. Optional closed forms are
    used when present, otherwise values are derived from ``a``.
    """
    name: str
    a: ScalarMap
    alpha: float
    beta: float
    params: Mapping[str, Any] = field(default_factory=dict)
    a_prime: Optional[ScalarMap] = None
    log_a: Optional[ScalarMap] = None
    elasticity: Optional[ScalarMap] = None
    flux: Optional[ScalarMap] = None
    flux_inverse: Optional[ScalarMap] = None
    flux_sup: float = math.inf
    domain_sup: float = math.inf
    spec: Optional[Dict[str, Any]] = field(default=None, compare=False)

    def value(self, s) -> np.ndarray:
        return self.a(np.asarray(s, dtype=float))

    def derivative(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.a_prime is not None:
            return self.a_prime(s)
        h = 1e-6 * s
        return (self.a(s + h) - self.a(s - h)) / (2.0 * h)

    def log_value(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.log_a is not None:
            return self.log_a(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(self.a(s))

    def elasticity_at(self, s) -> np.ndarray:
        """D(s) = s a'(s) / a(s)."""
        s = np.asarray(s, dtype=float)
        if self.elasticity is not None:
            return self.elasticity(s)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return s * self.derivative(s) / self.a(s)

    def to_spec(self) -> Dict[str, Any]:
        if self.spec is not None:
            return dict(self.spec)
        return {"name": self.name, "params": dict(self.params)}


@dataclass(frozen=True)
class StructureReport:
    """Realized structure constants of a model on a sample grid."""
    alpha_hat: float
    beta_hat: float
    holds_A: bool
    holds_Aprime: bool
    a2_class: str
    within_declared: bool
    s_min: float
    s_max: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha_hat": self.alpha_hat,
            "beta_hat": self.beta_hat,
            "holds_A": self.holds_A,
            "holds_Aprime": self.holds_Aprime,
            "A2_class": self.a2_class,
            "within_declared": self.within_declared,
            "s_min": self.s_min,
            "s_max": self.s_max,
        }


@dataclass(frozen=True)
class EllipticCoefficients:
    """Coefficients of the complex gradient system at one value of D."""
    D: float
    B: float
    C: float
    B_ratio: float
    abs_sum: float

    @property
    def ellipticity_bound(self) -> float:
        return 0.5 * self.abs_sum


@dataclass(frozen=True)
class CordesConstants:
    c1: float
    c2: float
    alpha: float
    beta: float


@dataclass(frozen=True)
class CordesSampleReport:
    """Outcome of a randomized check of a Cordes-type inequality."""
    n_samples: int
    violations: int
    worst_slack: float
    seed: int

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_samples": self.n_samples,
            "violations": self.violations,
            "worst_slack": self.worst_slack,
            "seed": self.seed,
        }


class LambdaKind(Enum):
    """Conformal factor families."""
    FLAT = "flat"
    HYPERBOLIC_DISK = "hyperbolic_disk"
    GAUSSIAN_BUMP = "gaussian_bump"
    SPHERICAL = "spherical"
    USER = "user"


class Topology(Enum):
    ANNULUS_IN_DISK = "annulus_in_disk"
    CYLINDER = "cylinder"
    PATCH = "patch"


@dataclass(frozen=True)
class LambdaSpec:
    kind: LambdaKind = LambdaKind.FLAT
    c: float = 0.0
    values: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind.value}
        if self.kind == LambdaKind.GAUSSIAN_BUMP:
            data["c"] = self.c
        return data


@dataclass(frozen=True)
class AnnulusChart:
    """Logarithmic chart (sigma, theta) with conformal factor mu on a tensor grid.

    For annuli sigma runs over [0, ln R] and theta is periodic. Patches use
    plain Cartesian coordinates with both axes non-periodic.
    """
    R: float
    sigma: np.ndarray
    theta: np.ndarray
    mu: np.ndarray
    topology: Topology
    lambda_spec: LambdaSpec
    r_inner: float = 1.0

    @property
    def n_sigma(self) -> int:
        return int(self.sigma.size)

    @property
    def n_theta(self) -> int:
        return int(self.theta.size)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_sigma, self.n_theta

    @property
    def periodic(self) -> bool:
        return self.topology != Topology.PATCH

    @property
    def h_sigma(self) -> float:
        return float(self.sigma[1] - self.sigma[0])

    @property
    def h_theta(self) -> float:
        if self.periodic:
            return 2.0 * math.pi / self.n_theta
        return float(self.theta[1] - self.theta[0])

    @cached_property
    def log_mu(self) -> np.ndarray:
        return np.log(self.mu)

    @cached_property
    def z(self) -> np.ndarray:
        """Planar coordinate of every node."""
        w = self.sigma[:, None] + 1j * self.theta[None, :]
        if self.topology == Topology.ANNULUS_IN_DISK:
            return self.r_inner * np.exp(w)
        return w

    def describe(self) -> Dict[str, Any]:
        return {
            "R": self.R,
            "n_sigma": self.n_sigma,
            "n_theta": self.n_theta,
            "topology": self.topology.value,
            "lambda": self.lambda_spec.to_dict(),
            "r_inner": self.r_inner,
        }


@dataclass(frozen=True)
class VectorField:
    """Contravariant chart components of a tangent field."""
    d_sigma: np.ndarray
    d_theta: np.ndarray


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 500
    scheme: str = "picard"
    damping: float = 0.7
    epsilon0: float = 1e-3
    epsilon_decay: float = 0.5
    epsilon_interval: int = 20
    epsilon_floor_ratio: float = 0.01
    linear_tol: float = 1e-11
    linear_max_iter: int = 20000
    line_search_steps: int = 30

    @property
    def epsilon_floor(self) -> float:
        return self.epsilon0 * self.epsilon_floor_ratio


@dataclass(frozen=True)
class Solution:
    """Converged (or injected) solution of the Dirichlet problem."""
    chart: AnnulusChart
    model: DiffusivityModel
    u: np.ndarray
    t1: float
    t2: float
    epsilon: float = 1e-5
    iterations: int = 0
    residual: float = float("nan")
    converged: bool = True
    scheme: str = "picard"
    history: Tuple[Dict[str, float], ...] = field(default=(), compare=False, repr=False)

    def diagnostics(self) -> Dict[str, Any]:
        return {
            "scheme": self.scheme,
            "iterations": self.iterations,
            "residual": self.residual,
            "epsilon": self.epsilon,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class ExtremumReport:
    min_u: float
    max_u: float
    min_interior_gradient: float
    min_boundary_gradient: float
    argmin: Tuple[int, int]
    floor: float

    @property
    def passed(self) -> bool:
        return self.min_interior_gradient > self.floor

    def to_dict(self) -> Dict[str, Any]:
        return {
            "min_u": self.min_u,
            "max_u": self.max_u,
            "min_interior_gradient": self.min_interior_gradient,
            "min_boundary_gradient": self.min_boundary_gradient,
            "argmin": list(self.argmin),
            "floor": self.floor,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class LevelCurve:
    """Level set {u = t} as polylines in chart coordinates (sigma, theta).

    Theta is unwrapped along each component, so a closed curve around the
    hole ends 2*pi*winding away from where it starts.
    """
    t: float
    components: Tuple[np.ndarray, ...]
    closed: Tuple[bool, ...]
    winding: Tuple[int, ...]

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def is_simple_closed(self) -> bool:
        return self.n_components == 1 and self.closed[0] and abs(self.winding[0]) == 1


@dataclass(frozen=True)
class GaussBonnetCheck:
    lhs: float
    rhs: float
    rel_error: float
    applicable: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {"lhs": self.lhs, "rhs": self.rhs, "rel_error": self.rel_error, "applicable": self.applicable}


@dataclass(frozen=True)
class ProfileContext:
    """Everything a verdict gate needs to know about where a profile came from."""
    model_name: str = "p_harmonic"
    alpha: float = 1.0
    beta: float = 1.0
    topology: Topology = Topology.ANNULUS_IN_DISK
    curvature_max: float = 0.0
    curvature_min: float = 0.0
    gradient_min: float = 0.0
    gradient_max: float = 0.0
    alpha_realized: float = 1.0
    beta_realized: float = 1.0
    minimal_growth: bool = False
    spacelike_cap: float = 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model_name,
            "alpha": self.alpha,
            "beta": self.beta,
            "topology": self.topology.value,
            "curvature_max": self.curvature_max,
            "curvature_min": self.curvature_min,
            "gradient_min": self.gradient_min,
            "gradient_max": self.gradient_max,
            "alpha_realized": self.alpha_realized,
            "beta_realized": self.beta_realized,
            "minimal_growth": self.minimal_growth,
            "spacelike_cap": self.spacelike_cap,
        }


PROFILE_COLUMNS = [
    "t", "L", "L1_fd", "L1_coarea", "L2_fd", "L2_coarea", "k_int", "k_int_GB", "K_interior",
]


@dataclass(frozen=True)
class Profile:
    """Level-length profile L(t) with derivatives from both routes."""
    t: np.ndarray
    L: np.ndarray
    L1_fd: np.ndarray
    L1_coarea: np.ndarray
    L2_fd: np.ndarray
    L2_coarea: np.ndarray
    k_integral: np.ndarray
    k_integral_gb: np.ndarray
    interior_K: np.ndarray
    context: ProfileContext = field(default_factory=ProfileContext)
    L1_model: Optional[np.ndarray] = None
    L2_model: Optional[np.ndarray] = None

    @classmethod
    def from_arrays(cls, t, L, L1, L2, k_integral=None, context: Optional[ProfileContext] = None) -> "Profile":
        """Profile whose two derivative routes coincide."""
        t = np.asarray(t, dtype=float)
        L = np.asarray(L, dtype=float)
        L1 = np.asarray(L1, dtype=float)
        L2 = np.asarray(L2, dtype=float)
        k = np.full_like(t, -2.0 * math.pi) if k_integral is None else np.asarray(k_integral, dtype=float)
        return cls(
            t=t, L=L, L1_fd=L1, L1_coarea=L1, L2_fd=L2, L2_coarea=L2,
            k_integral=k, k_integral_gb=-k, interior_K=np.full_like(t, np.nan),
            context=context or ProfileContext(),
        )

    def derivatives(self, source: str = "coarea") -> Tuple[np.ndarray, np.ndarray]:
        if source == "coarea":
            return self.L1_coarea, self.L2_coarea
        if source == "fd":
            return self.L1_fd, self.L2_fd
        raise DomainError(f"unknown derivative source '{source}'")

    def rows(self) -> List[List[float]]:
        columns = [self.t, self.L, self.L1_fd, self.L1_coarea, self.L2_fd, self.L2_coarea,
                   self.k_integral, self.k_integral_gb, self.interior_K]
        return [list(map(float, values)) for values in zip(*columns)]


class VerdictStatus(Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_APPLICABLE = "not_applicable"


@dataclass(frozen=True)
class Verdict:
    name: str
    status: VerdictStatus
    margin: Optional[float]
    hypotheses_met: Dict[str, bool]
    notes: Tuple[str, ...] = ()
    sample_margins: Tuple[float, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "status": self.status.value,
            "margin": self.margin,
            "hypotheses_met": dict(self.hypotheses_met),
            "notes": list(self.notes),
            "sample_margins": list(self.sample_margins),
        }


@dataclass(frozen=True)
class SystemCoefficients:
    """Pointwise coefficients of F_zbar = a1 F_z + a2 conj(F_z) + ..."""
    a1: np.ndarray
    a2: np.ndarray
    D: np.ndarray

    @property
    def sup_bound(self) -> float:
        return float(np.max(np.abs(self.a1) + np.abs(self.a2)))


@dataclass(frozen=True)
class StreamSolution:
    """Multivalued stream function v with its period around the hole.

    ``triangle_gradients`` hold the edge-midpoint reconstruction the nodal
    field ``v`` is averaged from.
    """
    chart: AnnulusChart
    v: np.ndarray
    branch_jump: float
    triangle_gradients: np.ndarray = field(repr=False)
    fit_residual: float = 0.0
    iterations: int = 0
