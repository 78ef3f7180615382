from dataclasses import dataclass, field
from typing import List, Optional, Tuple


@dataclass
class Config:
    """Application configuration."""
    configs_dir: str = "configs"
    output_dir: str = "output"
    # None = auto-detect based on CPU count
    max_parallel_workers: Optional[int] = None
    scenario_suffixes: List[str] = field(default_factory=lambda: [".json", ".yaml", ".yml"])
    seed: int = 0

    # Grid
    n_sigma: int = 128
    n_theta: int = 128
    hyperbolic_outer_radius: float = 0.9

    # Dirichlet solver
    solver_scheme: str = "picard"
    solver_tol: float = 1e-8
    solver_max_iter: int = 500
    solver_damping: float = 0.7
    epsilon0: float = 1e-3
    epsilon_decay: float = 0.5
    epsilon_interval: int = 20
    epsilon_floor_ratio: float = 0.01
    linear_tol: float = 1e-11
    linear_max_iter: int = 20000
    line_search_steps: int = 30

    # Radial reference
    oracle_quad_tol: float = 1e-10

    # Level profile
    n_samples: int = 17
    min_samples: int = 9
    end_margin: float = 0.02
    coarea_nodes: int = 24
    profile_workers: int = 1
    gradient_floor_factor: float = 1e-6
    contour_match_tol: float = 1e-7

    # Tolerances
    verdict_tol: float = 1e-3
    cross_validation_tol: float = 0.01
    cross_validation_second_tol: float = 0.03
    coarea_identity_tol: float = 0.01
    gauss_bonnet_tol: float = 0.01
    structure_tol: float = 1e-9
    curvature_tol: float = 1e-6
    beta_one_tol: float = 1e-9

    # Operator models
    s_grid_log10_min: float = -300.0
    s_grid_log10_max: float = 3.0
    s_grid_points: int = 12001
    boundedness_growth: float = 0.5
    invert_rtol: float = 1e-12
    invert_max_iter: int = 200

    # Cordes sampling
    cordes_margin: float = 1.01
    cordes_samples: int = 1_000_000
    cordes_chunk: int = 100_000
    cordes_workers: int = 4
    scenario_cordes_samples: int = 20_000

    # Stream function
    stream_lsqr_tol: float = 1e-13
    stream_lsqr_iter: int = 50_000

    # Identity suite
    identity_grids: Tuple[int, ...] = (64, 128, 256)
    identity_margin: int = 3
    identity_margin_fraction: float = 0.0625
    patch_extent: Tuple[float, float, float, float] = (1.0, 2.0, 1.0, 2.0)
