"""Markov-constrained covariance estimation for functional data."""

__version__ = "0.1.0"

from .errors import (
    DegenerateCorrelationError,
    DegenerateKernelError,
    EstimationError,
    KernelSpecError,
    KrigingError,
    MarkovCovError,
    NoiseIdentifiabilityError,
    NumericalError,
    SamplingError,
)
from .estimation import (
    BinnedStatistics,
    EstimatedKernel,
    bin_observations,
    empirical_estimate,
    estimate_noise,
    fit_estimator,
    l2_error,
    markov_estimate,
    oracle_kernel,
    smoothed_estimate,
    triangular_estimate,
)
from .experiments import ExperimentConfig, ExperimentResult, run_experiment
from .kriging import KrigingSystem, kriging_error_benchmark, solve_kriging, summarize_errors
from .markovtest import (
    TestReport,
    endpoint_statistics,
    fisher_z,
    markov_test,
    partial_correlation,
    power_curve,
    roc_curve,
    simulate_roc,
    simulate_tests,
)
from .processes import (
    Grid,
    Irregular,
    KernelSpec,
    ObservationSet,
    eval_kernel,
    kernel_matrix,
    sample_curves,
    wendland,
)
from .tables import ResultTable, read_curves, write_curves
from .transform import (
    MarkovFactorization,
    ar1_covariance,
    endpoint_identity_residual,
    gaussian_kl,
    markov_transform,
    misspecification,
)
