"""Covariate-adjusted generalized random dot product graphs.

Iterative profile least squares estimation, mixture clustering of the
latent positions and weighted bootstrap inference.
"""
__version__ = "0.1.0"

from .bootstrap import (
    BootstrapEnsemble,
    WeightScheme,
    bootstrap_gamma,
    bootstrap_latent,
    confidence_interval,
    draw_weights,
    relabel_monotone,
    run_bootstrap,
)
from .clustering import GmmFit, cluster_latent, fit_gmm, residual_blocks, select_k
from .errors import *  # noqa: F401,F403
from .estimator import FitConfig, FitResult, fit, fit_once, gamma_update, objective
from .metrics import adjusted_rand_index, mse, normalized_mutual_information
from .model import (
    ModelParams,
    ResidualBlocks,
    Signature,
    covariate_effect,
    edge_probability_matrix,
    indefinite_inner_product,
    latent_kernel,
    validate_probability_model,
)
from .pipeline import Estimate, estimate
from .simulate import (
    SimulationTruth,
    edge_covariates_from_nodes,
    sample_bernoulli_graph,
    simulate_type1,
    simulate_type2,
)
from .spectral import rank_d_filter, select_dimension_zhu_ghodsi, spectral_embed
