"""Workbench for nucleated protein polymerization kinetics: forward
simulation, generalized-least-squares estimation, uncertainty quantification,
and nested-model comparison."""

from .model import (
    ESTIMABLE,
    FreeMask,
    Mesh,
    MeshSpec,
    ModelParameters,
    build_mesh,
    default_mesh,
    kon_eval,
    validate_parameters,
)
from .forward import (
    HybridState,
    SolverSettings,
    Trajectory,
    advect_step,
    closure_consistency,
    conservation_residual,
    observable,
    solve_forward,
    stable_dt,
)
from .observation import (
    ObservationSet,
    ResidualSeries,
    gamma_scan,
    load_observations_csv,
    residual_diagnostics,
    residuals,
    save_observations_csv,
    simulate_observations,
    truncate_observations,
)
from .estimator import FitResult, NelderMeadConfig, fit, gls_cost, minimize
from .uncertainty import (
    FiniteDifferenceConfig,
    UncertaintyReport,
    asymptotic_errors,
    confidence_intervals,
    evaluate_uncertainty,
    fisher_matrix,
    sensitivity_matrix,
    sigma2_hat,
)
from .bootstrap import BootstrapResult, bootstrap_estimate, bootstrap_summary
from .comparison import (
    ComparisonReport,
    NestedSpec,
    chi_square_sf,
    chi_square_threshold,
    compare_nested,
    report_from_costs,
    test_statistic,
)
from .benchmark import (
    benchmark_parameters,
    demo_parameters,
    fast_benchmark,
    fast_benchmark_mesh,
    scaled_benchmark,
)
from .config import RunConfig

__version__ = "0.1.0"
