"""Support-function least squares: fitting convex bodies to noisy support
measurements, with localized Gaussian width and local entropy diagnostics."""

__version__ = "0.1.0"

from .geometry import (
    DesignSet,
    Polytope,
    SphereNet,
    SupportVector,
    approx_error_sup,
    build_regular_polytope,
    build_sphere_net,
    build_well_separated_design,
    min_geodesic_separation,
    net_multiplicity,
    sample_sphere_uniform,
    support_value,
    support_vector,
    support_witnesses,
)
from .solver import (
    LseFit,
    Observations,
    RiskResult,
    SolverBudget,
    SolverFailure,
    check_vertex_bound,
    fit_lse,
    kkt_residual,
    oracle_lse_2d,
    risk,
)
from .widths import (
    LocalBall,
    TwoPointReport,
    WidthProfile,
    dudley_upper,
    gaussian_width,
    h_profile,
    load_width_profile,
    sandwich_check,
    sudakov_lower,
    two_point_certificate,
)
from .entropy import (
    EntropyCurve,
    FunctionCloud,
    distortion_estimate,
    entropy_slope,
    greedy_packing,
    load_entropy_curve,
    sample_local_cloud,
)
from .experiments import (
    ChatterjeeRow,
    ChatterjeeTable,
    DataVersionError,
    ExperimentConfig,
    RateFit,
    RiskRow,
    RiskTable,
    SuboptimalityReport,
    TableParseError,
    cell_seed,
    chatterjee_sweep,
    fit_rate,
    load,
    persist,
    run_risk_sweep,
    suboptimality_report,
    truth_profile,
    width_contrast,
)
from .svgplot import profile_svg, risk_svg

__all__ = [
    "__version__",
    "DesignSet",
    "Polytope",
    "SphereNet",
    "SupportVector",
    "approx_error_sup",
    "build_regular_polytope",
    "build_sphere_net",
    "build_well_separated_design",
    "min_geodesic_separation",
    "net_multiplicity",
    "sample_sphere_uniform",
    "support_value",
    "support_vector",
    "support_witnesses",
    "LseFit",
    "Observations",
    "RiskResult",
    "SolverBudget",
    "SolverFailure",
    "check_vertex_bound",
    "fit_lse",
    "kkt_residual",
    "oracle_lse_2d",
    "risk",
    "LocalBall",
    "TwoPointReport",
    "WidthProfile",
    "dudley_upper",
    "gaussian_width",
    "h_profile",
    "load_width_profile",
    "sandwich_check",
    "sudakov_lower",
    "two_point_certificate",
    "EntropyCurve",
    "FunctionCloud",
    "distortion_estimate",
    "entropy_slope",
    "greedy_packing",
    "load_entropy_curve",
    "sample_local_cloud",
    "ChatterjeeRow",
    "ChatterjeeTable",
    "DataVersionError",
    "ExperimentConfig",
    "RateFit",
    "RiskRow",
    "RiskTable",
    "SuboptimalityReport",
    "TableParseError",
    "cell_seed",
    "chatterjee_sweep",
    "fit_rate",
    "load",
    "persist",
    "run_risk_sweep",
    "suboptimality_report",
    "truth_profile",
    "width_contrast",
    "profile_svg",
    "risk_svg",
]
