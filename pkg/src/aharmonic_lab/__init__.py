from .models import (
    AnnulusChart,
    ConfigError,
    CordesConstants,
    CordesSampleReport,
    CriticalProximityError,
    DiffusivityModel,
    DomainError,
    EvaluationError,
    FieldShapeError,
    InvalidMetricError,
    LabError,
    LambdaKind,
    LambdaSpec,
    LevelCurve,
    LevelError,
    OracleError,
    Profile,
    ProfileContext,
    Solution,
    SolverError,
    StageError,
    StreamError,
    StreamSolution,
    StructureReport,
    StructureViolation,
    Topology,
    Verdict,
    VerdictStatus,
)
from .operators import (
    BUILTIN_MODELS,
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
from .chart import build_chart, build_patch, gauss_curvature, gradient_norm, riemannian_laplacian
from .solver import radial_oracle, solve_dirichlet, solver_options, weak_residual
from .levels import build_profile, coarea_identity, cross_validation, extract_level, gauss_bonnet_check
from .verdicts import VERDICT_NAMES, evaluate_verdicts
from .complex_system import (
    F_field,
    complex_gradient,
    conjugate_residual,
    stream_function,
    system_coefficients,
    system_residual,
)
from .identities import (
    bochner_residual,
    cordes_claim_sample,
    cordes_claim_slack,
    cordes_discriminant_sample,
    det_hess_identity_residual,
    kato_defect,
    log_gradient_identity_residual,
    refinement_order,
    run_identity_suite,
)
from .scenarios import Scenario, apply_overrides, find_scenarios, load_scenario, scenario_from_mapping
from .pipeline import ResultBundle, run_scenario

__all__ = [
    'AnnulusChart', 'ConfigError', 'CordesConstants', 'CordesSampleReport', 'CriticalProximityError',
    'DiffusivityModel', 'DomainError', 'EvaluationError', 'FieldShapeError', 'InvalidMetricError',
    'LabError', 'LambdaKind', 'LambdaSpec', 'LevelCurve', 'LevelError', 'OracleError', 'Profile',
    'ProfileContext', 'Solution', 'SolverError', 'StageError', 'StreamError', 'StreamSolution',
    'StructureReport', 'StructureViolation', 'Topology', 'Verdict', 'VerdictStatus',
    'BUILTIN_MODELS', 'alternate_system_ratio', 'conjugate_model', 'cordes_constants',
    'elliptic_coefficients', 'flux_map', 'half_flux_map', 'invert_flux', 'invert_half_flux',
    'maximal_lorentz', 'minimal_surface', 'model_from_spec', 'p_harmonic', 'riccati_gamma',
    'satisfies_minimal_growth', 'structure_report', 'subsonic_gas', 'valtorta',
    'build_chart', 'build_patch', 'gauss_curvature', 'gradient_norm', 'riemannian_laplacian',
    'radial_oracle', 'solve_dirichlet', 'solver_options', 'weak_residual',
    'build_profile', 'coarea_identity', 'cross_validation', 'extract_level', 'gauss_bonnet_check',
    'VERDICT_NAMES', 'evaluate_verdicts',
    'F_field', 'complex_gradient', 'conjugate_residual', 'stream_function', 'system_coefficients',
    'system_residual',
    'bochner_residual', 'cordes_claim_sample', 'cordes_claim_slack', 'cordes_discriminant_sample',
    'det_hess_identity_residual', 'kato_defect', 'log_gradient_identity_residual', 'refinement_order',
    'run_identity_suite',
    'Scenario', 'apply_overrides', 'find_scenarios', 'load_scenario', 'scenario_from_mapping',
    'ResultBundle', 'run_scenario',
]
