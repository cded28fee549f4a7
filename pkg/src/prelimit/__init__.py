"""Generator-comparison tooling for lattice Markov chains and their diffusion limits."""

__version__ = "0.1.0"

from .errors import (
    DomainError,
    GridIndexError,
    IntegrationError,
    PrelimitError,
    SamplingError,
    SolverError,
    StabilityError,
)
from .grids import (
    GridFunction,
    LatticeSpec,
    MultiIndex,
    difference_array,
    forward_difference,
    is_dlip,
    max_abs_difference,
    sample_dlip,
    sample_dlip_higher,
)
from .interpolate import (
    WEIGHTS,
    Interpolant,
    WeightTable,
    derivative_1d,
    derivative_nd,
    evaluate_1d,
    evaluate_nd,
    weight,
)
from .ctmc import (
    AffineRate,
    ConstantRate,
    GatedRate,
    PoissonSolution,
    RateKernel,
    StationaryDistribution,
    birth_death_poisson,
    generator_apply,
    generator_grid,
    kernel_from_config,
    poisson_via_integral,
    solve_poisson,
    stationary,
)
from .interchange import (
    InterchangeReport,
    a_gx,
    epsilon_1d,
    epsilon_nd,
    extend_hat,
    interchange_report,
    interchanged_main,
    mm1_boundary_interchange,
)
from .metrics import DistributionHandle, lemma1_gap, wasserstein1
from .mm1 import (
    ErrorDecomposition,
    Mm1Params,
    SteinFactorReport,
    SweepResult,
    convergence_gap,
    convergence_sweep,
    daly_bound,
    error_decomposition,
    first_order_bound,
    geometric_mean,
    geometric_stationary,
    mm1_kernel,
    rbm_stationary_mean,
    rbmbar_residual,
    stein_factor_bound,
    stein_factor_report,
    third_order_identity_residual,
    tightness_residual,
)
from .coupling import (
    CouplingEstimate,
    MisalignmentReport,
    PairTrajectory,
    QuadTrajectory,
    coupling_time_estimate,
    estimate_delta,
    rbm_misalignment_demo,
    simulate_pair,
    simulate_quadruple,
)

__all__ = [
    "__version__",
    "PrelimitError",
    "GridIndexError",
    "DomainError",
    "SamplingError",
    "SolverError",
    "StabilityError",
    "IntegrationError",
    "LatticeSpec",
    "GridFunction",
    "MultiIndex",
    "forward_difference",
    "difference_array",
    "max_abs_difference",
    "sample_dlip",
    "sample_dlip_higher",
    "is_dlip",
    "WeightTable",
    "WEIGHTS",
    "Interpolant",
    "weight",
    "evaluate_1d",
    "derivative_1d",
    "evaluate_nd",
    "derivative_nd",
    "ConstantRate",
    "AffineRate",
    "GatedRate",
    "RateKernel",
    "kernel_from_config",
    "StationaryDistribution",
    "PoissonSolution",
    "generator_apply",
    "generator_grid",
    "stationary",
    "solve_poisson",
    "birth_death_poisson",
    "poisson_via_integral",
    "InterchangeReport",
    "a_gx",
    "interchanged_main",
    "epsilon_1d",
    "epsilon_nd",
    "extend_hat",
    "mm1_boundary_interchange",
    "interchange_report",
    "DistributionHandle",
    "wasserstein1",
    "lemma1_gap",
    "Mm1Params",
    "geometric_stationary",
    "geometric_mean",
    "rbm_stationary_mean",
    "mm1_kernel",
    "stein_factor_bound",
    "first_order_bound",
    "daly_bound",
    "SteinFactorReport",
    "stein_factor_report",
    "third_order_identity_residual",
    "ErrorDecomposition",
    "error_decomposition",
    "rbmbar_residual",
    "convergence_gap",
    "convergence_sweep",
    "SweepResult",
    "tightness_residual",
    "CouplingEstimate",
    "MisalignmentReport",
    "PairTrajectory",
    "QuadTrajectory",
    "simulate_pair",
    "simulate_quadruple",
    "estimate_delta",
    "coupling_time_estimate",
    "rbm_misalignment_demo",
]
