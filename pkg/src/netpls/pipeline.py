"""Point estimate end to end: fit, cluster the latent positions, build P-hat."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bootstrap import relabel_monotone
from .clustering import COV_MODELS, GmmFit, cluster_latent
from .estimator import FitConfig, FitResult, _check_inputs, fit
from .model import ResidualBlocks, covariate_effect, edge_probability_matrix


@dataclass
class Estimate:
    """Fitted model with clusters relabeled by descending ``diag(Theta)``."""

    fit: FitResult
    gmm: GmmFit
    blocks: ResidualBlocks
    C: np.ndarray
    P: np.ndarray

    @property
    def node_permutation(self) -> np.ndarray:
        """Nodes grouped by cluster, clusters in relabeled order, ties by node index."""
        return np.argsort(self.blocks.assignments, kind="stable")

    @property
    def theta_expanded(self) -> np.ndarray:
        return self.blocks.expanded()


def estimate(A, X, config: FitConfig | None = None, K: int | None = None, k_max: int = 9,
             cov_models=COV_MODELS, clamp: bool = False, n_init: int = 10) -> Estimate:
    """Run the estimator and the mixture clustering on its latent positions.

    ``K`` fixes the number of clusters; otherwise it is chosen by BIC.
    """
    config = config or FitConfig()
    A, X = _check_inputs(A, X)
    res = fit(A, X, config)
    gmm, blocks = cluster_latent(res.Lambda, res.signature, K, k_max, cov_models,
                                 seed=config.seed, n_init=n_init, threads=config.threads)
    blocks = relabel_monotone(blocks)
    n = A.shape[0]
    C = covariate_effect(res.gamma, X) if X.shape[0] else np.zeros((n, n))
    P = edge_probability_matrix(res.gamma, blocks, X, clamp=clamp) if X.shape[0] else \
        (np.clip(blocks.expanded(), 0, 1) if clamp else blocks.expanded())
    return Estimate(res, gmm, blocks, C, P)
