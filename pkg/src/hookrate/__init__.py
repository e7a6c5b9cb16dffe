"""Relative abundance indices for longline surveys.

Estimates per-hook, per-minute capture rates from hook-outcome counts,
accounting for interspecific competition for bait and for hooks that
come back empty. Provides closed-form and numerical maximum likelihood,
asymptotic and bootstrap uncertainty, a Bayesian sampler, a generative
simulator, and a simulation-study harness.
"""

__version__ = "0.1.0"

from .bayes import (
    PosteriorSample,
    PriorSpec,
    prior_distance,
    sample_posterior,
    summarize_posterior,
)
from .errors import (
    BootstrapError,
    DataValidationError,
    DegenerateDataError,
    EstimationError,
    HeterogeneousDataError,
    HookrateError,
    SaturationError,
    SoakSpreadError,
)
from .estimators import (
    EstimateResult,
    Method,
    cpue,
    expected_counts,
    expected_cpue,
    fit_mem1,
    fit_mem2,
    fit_regular,
    fit_sem_closed,
    hovgard_lambda,
)
from .likelihoods import (
    MemModel,
    MemParams,
    SemParams,
    SemVariant,
    cell_probabilities,
    mem_loglik,
    mem_score_and_hessian,
    sem_loglik,
)
from .optimize import FitDiagnostics, OptimizerConfig, fit_numeric
from .records import (
    Dataset,
    PooledCounts,
    SetRecord,
    parse_hook_records,
    parse_records,
    pool,
    write_records,
)
from .simulate import SCENARIO_PRESETS, Scenario, SimulatedSet, simulate_dataset, simulate_set
from .study import StudyGrid, StudyReport, analytic_vs_numeric, run_study
from .uncertainty import (
    BootstrapSummary,
    CovarianceMatrix,
    asymptotic_cov_mem1,
    asymptotic_cov_mem2,
    bootstrap,
    numeric_fisher_cov,
    with_asymptotic_covariance,
)
