"""Supervised dimension reduction with posterior-sampled conditional moments.

Implements the classical sliced estimators (SIR, SAVE) alongside their
Bayesian counterparts (BIR, BAVE), which replace slicing with posterior
sampling of x given each observed response under a Gaussian-process
likelihood.  Includes subspace-accuracy metrics and a seeded benchmark
harness.
"""

from .data import (
    Dataset,
    FunctionId,
    SyntheticSpec,
    Whitener,
    fit_whitener,
    gen_synthetic,
    load_csv,
    unwhiten_direction,
    whiten,
)
from .dr import (
    DrResult,
    SliceStats,
    bave,
    bir,
    r2_direction,
    r2_subspace,
    save,
    sir,
    slice_partition,
    top_k_eigvectors,
)
from .gp import GpHyperparams, GpModel, fit_gp, kernel_eval, log_marginal_likelihood
from .inference import (
    EmpiricalPrior,
    GaussianPrior,
    Prior,
    SampleSet,
    StandardNormalPrior,
    conditional_cov,
    conditional_mean,
    fit_gaussian_prior,
    is_sample_posterior,
    mcmc_sample_posterior,
)
from .bench import (
    ExperimentConfig,
    MetricReport,
    mrre,
    ols_fit,
    ols_predict,
    run_mrre_study,
    run_r2_study,
)

__version__ = "0.1.0"
