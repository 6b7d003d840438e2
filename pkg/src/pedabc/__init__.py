"""Likelihood-free inference for pedestrian flow models on small networks.

The main entry points are the estimators :class:`RejectionABC`,
:class:`TopQuantileRejectionABC` and :class:`ABCSMC`, the config-driven
:func:`run_experiment`, and the ``pedabc`` command line.
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, bundled_config, load_config  # noqa: E402
from .distributions import (  # noqa: E402
    DistributionSpec,
    dirichlet_posterior_mean,
    gk_quantile,
    log_density,
    parse_distribution,
    sample,
    standard_normal_quantile,
)
from .inference import (  # noqa: E402
    ABCSMC,
    RejectionABC,
    RunRecord,
    TopQuantileRejectionABC,
    abc_rejection,
    abc_rejection_top_quantile,
    abc_smc,
    abc_smc_adaptive,
    bsl_log_likelihood,
    next_epsilon,
    run_experiment,
)
from .kernels import KernelSpec, Population, parse_kernel  # noqa: E402
from .parameters import Prior  # noqa: E402
from .posterior import (  # noqa: E402
    PosteriorSample,
    RegressionAdjustment,
    credible_interval,
    prediction_intervals,
    regression_adjust,
    weighted_mean,
)
from .simulators import (  # noqa: E402
    build_cbd_network,
    build_fork_network,
    make_model,
    simulate_cbd,
    simulate_fork,
    simulate_gaussian,
)

__all__ = [
    "ABCSMC",
    "DistributionSpec",
    "ExperimentConfig",
    "KernelSpec",
    "Population",
    "PosteriorSample",
    "Prior",
    "RegressionAdjustment",
    "RejectionABC",
    "RunRecord",
    "TopQuantileRejectionABC",
    "abc_rejection",
    "abc_rejection_top_quantile",
    "abc_smc",
    "abc_smc_adaptive",
    "bsl_log_likelihood",
    "build_cbd_network",
    "build_fork_network",
    "bundled_config",
    "credible_interval",
    "dirichlet_posterior_mean",
    "gk_quantile",
    "load_config",
    "log_density",
    "make_model",
    "next_epsilon",
    "parse_distribution",
    "parse_kernel",
    "prediction_intervals",
    "regression_adjust",
    "run_experiment",
    "sample",
    "simulate_cbd",
    "simulate_fork",
    "simulate_gaussian",
    "standard_normal_quantile",
    "weighted_mean",
]
