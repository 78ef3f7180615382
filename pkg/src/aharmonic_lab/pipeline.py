import logging
import math
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional

import numpy as np

from src.config import Config
from src.utils import ScenarioLoggerAdapter

from .chart import build_chart, curvature_sign, gauss_curvature, stokes_defect
from .complex_system import (
    conjugate_coefficient_check,
    conjugate_residual,
    duality_error,
    stream_function,
    system_coefficients,
    system_residual,
)
from .identities import cordes_claim_sample, cordes_discriminant_sample
from .io_results import write_field_csv, write_grid, write_json, write_profile_csv
from .levels import LevelAnalyzer, build_profile, cross_validation
from .models import (
    AnnulusChart,
    DiffusivityModel,
    DomainError,
    LabError,
    LambdaKind,
    Profile,
    Solution,
    StageError,
    Topology,
    Verdict,
    VerdictStatus,
)
from .operators import conjugate_model, cordes_constants, model_from_spec, model_summary, structure_report
from .scenarios import Scenario
from .solver import (
    extremum_report,
    laplacian_identity_residual,
    radial_oracle,
    solve_dirichlet,
    solver_options,
    theta_symmetry_defect,
)
from .verdicts import evaluate_verdicts

logger = logging.getLogger(__name__)

STAGES = ("chart", "model", "solver", "profile", "oracle", "verdicts", "complex", "cordes", "export")


@dataclass
class ResultBundle:
    """Everything one scenario run produced."""
    scenario: Scenario
    chart: AnnulusChart
    model: DiffusivityModel
    solution: Solution
    profile: Profile
    verdicts: List[Verdict]
    diagnostics: Dict[str, Any]
    output_dir: Optional[str] = None
    files: List[str] = field(default_factory=list)

    @property
    def failed(self) -> List[Verdict]:
        return [v for v in self.verdicts if v.status == VerdictStatus.FAIL]

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0

    def verdict_payload(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario.name,
            "source": self.scenario.source,
            "tol": self.scenario.tol,
            "verdicts": [v.to_dict() for v in self.verdicts],
        }

    def summary(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario.name,
            "model": self.model.name,
            "statuses": {v.name: v.status.value for v in self.verdicts},
            "margins": {v.name: v.margin for v in self.verdicts},
            "exit_code": self.exit_code,
        }


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Re-raise any failure inside the block as StageError tagged with ``name``."""
    try:
        yield
    except StageError:
        raise
    except (LabError, ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
        raise StageError(name, e) from e


def _oracle_applies(scenario: Scenario, chart: AnnulusChart) -> bool:
    if scenario.oracle is not None:
        return scenario.oracle
    return chart.topology == Topology.ANNULUS_IN_DISK and chart.lambda_spec.kind == LambdaKind.FLAT


def _oracle_diagnostics(solution: Solution, profile_levels: np.ndarray,
                        lengths: np.ndarray, config: Config) -> Dict[str, Any]:
    chart = solution.chart
    reference = radial_oracle(solution.model, chart.R, solution.t1, solution.t2, chart.r_inner, config)
    exact = reference.on_chart(chart)
    span = solution.t2 - solution.t1
    radii = np.asarray(reference.r_of_t(profile_levels), dtype=float)
    exact_lengths = 2.0 * math.pi * radii
    return {
        "flux_constant": reference.c,
        "max_error": float(np.max(np.abs(solution.u - exact))) / span,
        "length_rel_error": float(np.max(np.abs(lengths - exact_lengths) / exact_lengths)),
    }


def _complex_diagnostics(solution: Solution, config: Config) -> Dict[str, Any]:
    coefficients = system_coefficients(solution, config)
    stream = stream_function(solution, config)
    conjugate = conjugate_model(solution.model)
    report: Dict[str, Any] = {
        "sup_bound": coefficients.sup_bound,
        "system_residual": system_residual(solution, config=config),
        "stream_period": stream.branch_jump,
        "stream_fit_residual": stream.fit_residual,
        "conjugate_residual": conjugate_residual(stream, conjugate),
        "primal_residual": solution.residual,
        "duality_error": duality_error(stream, solution),
    }
    report.update({f"conjugate_{key}": value
                   for key, value in conjugate_coefficient_check(stream, solution, conjugate).items()})
    return report


def _cordes_diagnostics(model: DiffusivityModel, seed: int, config: Config) -> Dict[str, Any]:
    """Seeded Cordes sampling at the declared structure bounds of the model."""
    try:
        constants = cordes_constants(model.alpha, model.beta, config=config)
    except DomainError as e:
        return {"skipped": str(e)}
    n = config.scenario_cordes_samples
    return {
        "constants": {"c1": constants.c1, "c2": constants.c2},
        "claim": cordes_claim_sample(constants, n, seed, config).to_dict(),
        "discriminant": cordes_discriminant_sample(constants, n, seed, config).to_dict(),
    }


def _profile_diagnostics(solution: Solution, profile: Profile, config: Config) -> Dict[str, Any]:
    analyzer = LevelAnalyzer(solution, config)
    middle = 0.5 * (solution.t1 + solution.t2)
    K = gauss_curvature(solution.chart)
    report: Dict[str, Any] = {
        "cross_validation": cross_validation(profile),
        "coarea_identity": analyzer.coarea_identity(),
        "gauss_bonnet": analyzer.gauss_bonnet(middle).to_dict(),
        "extremum": extremum_report(solution, config).to_dict(),
        "laplacian_identity": laplacian_identity_residual(solution),
        "context": profile.context.to_dict(),
        "curvature_sign": curvature_sign(K, config.curvature_tol),
    }
    if solution.chart.periodic:
        report["stokes_defect"] = stokes_defect(solution.chart, solution.u)
        report["theta_symmetry"] = theta_symmetry_defect(solution)
    return report


def _export(bundle: ResultBundle, output_dir: str) -> List[str]:
    os.makedirs(output_dir, exist_ok=True)
    files = [
        write_profile_csv(os.path.join(output_dir, "profile.csv"), bundle.profile),
        write_json(os.path.join(output_dir, "verdicts.json"), bundle.verdict_payload()),
        write_json(os.path.join(output_dir, "diagnostics.json"), bundle.diagnostics),
    ]
    if bundle.scenario.export_fields:
        files.append(write_grid(os.path.join(output_dir, "solution.grid"), bundle.chart, bundle.solution.u))
        files.append(write_field_csv(os.path.join(output_dir, "solution.csv"), bundle.chart, bundle.solution.u))
    return files


def run_scenario(scenario: Scenario, output_dir: Optional[str] = None, config: Optional[Config] = None) -> ResultBundle:
    """Full pipeline: chart, model, solve, reference, profile, verdicts, complex system, files.

    With ``output_dir`` set, results land in ``output_dir/<scenario name>``.
    """
    if config is None:
        config = Config()
    log = ScenarioLoggerAdapter(logger, scenario.name)
    spec = scenario.chart
    log.info(f"Starting: {scenario.model['name']} on {spec.topology} R={spec.R:.6g}, grid {spec.n_sigma}x{spec.n_theta}")

    with stage("chart"):
        chart = build_chart(spec.R, spec.n_sigma, spec.n_theta, spec.lambda_spec, spec.topology, spec.r_inner, config)

    with stage("model"):
        model = model_from_spec(scenario.model)
        structure = structure_report(model, config=config)
        if not structure.within_declared:
            log.warning(f"Realized bounds [{structure.alpha_hat:.6g}, {structure.beta_hat:.6g}] "
                        f"exceed the declared [{model.alpha:.6g}, {model.beta:.6g}]")

    with stage("solver"):
        options = solver_options(config, **scenario.solver)
        solution = solve_dirichlet(chart, model, scenario.t1, scenario.t2, options, config)

    with stage("profile"):
        profile = build_profile(solution, scenario.n_samples, config)
        diagnostics: Dict[str, Any] = {
            "scenario": scenario.to_dict(),
            "chart": chart.describe(),
            "model": model_summary(model),
            "structure": structure.to_dict(),
            "solver": solution.diagnostics(),
        }
        diagnostics.update(_profile_diagnostics(solution, profile, config))

    if _oracle_applies(scenario, chart):
        with stage("oracle"):
            diagnostics["oracle"] = _oracle_diagnostics(solution, profile.t, profile.L, config)

    with stage("verdicts"):
        verdicts = evaluate_verdicts(profile, scenario.verdicts, scenario.tol, scenario.source,
                                     scenario.pinched, config)

    if scenario.complex_system and chart.periodic:
        with stage("complex"):
            diagnostics["complex"] = _complex_diagnostics(solution, config)

    with stage("cordes"):
        diagnostics["cordes"] = _cordes_diagnostics(model, scenario.seed, config)

    bundle = ResultBundle(scenario=scenario, chart=chart, model=model, solution=solution, profile=profile,
                          verdicts=verdicts, diagnostics=diagnostics)
    if output_dir is not None:
        with stage("export"):
            bundle.output_dir = os.path.join(output_dir, scenario.name)
            bundle.files = _export(bundle, bundle.output_dir)

    for verdict in verdicts:
        margin = "-" if verdict.margin is None else f"{verdict.margin:.3e}"
        log.info(f"{verdict.name}: {verdict.status.value} (margin {margin})")
    if curvature_sign(gauss_curvature(chart), config.curvature_tol) == "positive":
        log.warning("Positive curvature: the convexity hypotheses do not hold on this chart")
    return bundle
