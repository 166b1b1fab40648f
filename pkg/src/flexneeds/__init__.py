"""Day-ahead robust flexibility needs assessment for radial LV feeders.

Pipeline: scenario generation under forecast uncertainty, electrical zoning,
per-scenario flexibility dispatch on a linearized branch-flow model with AC
validation, chance-constrained robust needs extraction, and the two case
studies (risk-level sweep with Pareto tuning, bound tightening).
"""

from .dispatch import (
    BatchResult,
    FlexBounds,
    FlexDispatch,
    Penalties,
    ac_validate,
    batch_solve,
    build_dispatch_problem,
    solve_dispatch,
)
from .needs import EmpiricalCDF, RobustNeeds, cc_quantile, ecdf, robust_needs, variance_report
from .network import (
    Network,
    NetworkError,
    ProfileSet,
    admittance_weights,
    load_network,
    load_network_file,
    load_profiles,
    self_sufficiency,
    serialize_network,
)
from .powerflow import CongestionStats, PFSolution, congestion_scan, solve_pf
from .scenarios import (
    CholeskyError,
    CovarianceSpec,
    ScenarioSet,
    build_covariance,
    cholesky,
    compose_net_load,
    generate,
    generate_feeder_scenarios,
)
from .studies import CCSweepRow, TighteningCell, cc_sweep, pareto_knee, tightening_sweep
from .zoning import ZonePartition, select_zones, silhouette, spectral_embed, to_doubly_stochastic

__version__ = "0.1.0"

__all__ = [
    "BatchResult",
    "CCSweepRow",
    "CholeskyError",
    "CongestionStats",
    "CovarianceSpec",
    "EmpiricalCDF",
    "FlexBounds",
    "FlexDispatch",
    "Network",
    "NetworkError",
    "PFSolution",
    "Penalties",
    "ProfileSet",
    "RobustNeeds",
    "ScenarioSet",
    "TighteningCell",
    "ZonePartition",
    "ac_validate",
    "admittance_weights",
    "batch_solve",
    "build_covariance",
    "build_dispatch_problem",
    "cc_quantile",
    "cc_sweep",
    "cholesky",
    "compose_net_load",
    "congestion_scan",
    "ecdf",
    "generate",
    "generate_feeder_scenarios",
    "load_network",
    "load_network_file",
    "load_profiles",
    "pareto_knee",
    "robust_needs",
    "select_zones",
    "self_sufficiency",
    "serialize_network",
    "silhouette",
    "solve_dispatch",
    "solve_pf",
    "spectral_embed",
    "tightening_sweep",
    "to_doubly_stochastic",
    "variance_report",
]
