"""Phase retrieval from coded diffraction patterns via convex lifting.

The package simulates intensity-only measurements of a complex signal
modulated by random diagonal masks, recovers the signal by trace-regularized
semidefinite relaxation, and provides numerical verifiers for the
concentration and dual-certificate machinery underlying exact recovery.
"""

from .signals import SignalVector, generate_lowpass, generate_gaussian, normalize
from .masks import (
    MaskDistribution,
    MaskEnsemble,
    AdmissibilityReport,
    octanary,
    ternary,
    binary,
    uniform,
    sample_ensemble,
    check_admissibility,
    normalize_distribution,
)
from .measurement import (
    MeasurementSet,
    LiftedOperator,
    GaussianOperator,
    forward_cdp,
    forward_gaussian,
    add_poisson_noise,
)
from .solver import (
    SolverConfig,
    SolverReport,
    SolverDivergedError,
    prox_psd_trace,
    solve_trace_ls,
    solve_poisson,
    extract_rank1,
)
from .analysis import (
    TrialMetrics,
    rel_error_lifted,
    rel_mse_lifted,
    rel_mse_db,
    phase_aligned_distance,
    snr_db,
)
from . import theory
from . import harness

__all__ = [
    "SignalVector",
    "generate_lowpass",
    "generate_gaussian",
    "normalize",
    "MaskDistribution",
    "MaskEnsemble",
    "AdmissibilityReport",
    "octanary",
    "ternary",
    "binary",
    "uniform",
    "sample_ensemble",
    "check_admissibility",
    "normalize_distribution",
    "MeasurementSet",
    "LiftedOperator",
    "GaussianOperator",
    "forward_cdp",
    "forward_gaussian",
    "add_poisson_noise",
    "SolverConfig",
    "SolverReport",
    "SolverDivergedError",
    "prox_psd_trace",
    "solve_trace_ls",
    "solve_poisson",
    "extract_rank1",
    "TrialMetrics",
    "rel_error_lifted",
    "rel_mse_lifted",
    "rel_mse_db",
    "phase_aligned_distance",
    "snr_db",
    "theory",
    "harness",
]
