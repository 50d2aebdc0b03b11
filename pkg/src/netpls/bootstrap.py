"""Generalized (weighted) bootstrap for the profile least squares fit.

Each replicate draws node weights ``w``, refits ``gamma`` by least squares
with pair weights ``w_i w_j`` given the point-estimate latent positions,
embeds ``D_w Y D_w`` at the point-estimate dimension, divides row ``i`` by
``sqrt(w_i)`` and reclusters with ``K`` fixed.  Clusters are aligned across
replicates only through the monotone relabeling of ``diag(Theta)``.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .clustering import COV_MODELS, fit_gmm
from .errors import EnsembleQualityError, InvalidArgumentError, NetPLSError
from .estimator import FitResult, _check_inputs, _pair_design, weighted_least_squares
from .model import ResidualBlocks, Signature, covariate_effect, latent_kernel
from .spectral import offdiagonal_embed, spectral_embed

log = logging.getLogger(__name__)

MAX_FAILURE_RATE = 0.10
CI_METHODS = ("percentile", "basic", "normal_bias_corrected")


@dataclass(frozen=True)
class WeightScheme:
    """Node weight distribution.

    ``bayesian`` draws i.i.d. exponential weights with rate ``alpha``
    (``None`` means ``n ** -0.5``); ``naive`` is Multinomial(n; 1/n, ...);
    ``moon`` is Multinomial(m; 1/n, ...).
    """

    kind: str = "bayesian"
    alpha: float | None = None
    m: int | None = None

    def __post_init__(self):
        if self.kind not in ("bayesian", "naive", "moon"):
            raise InvalidArgumentError(f"unknown weight scheme {self.kind!r}")
        if self.alpha is not None and not self.alpha > 0:
            raise InvalidArgumentError("alpha must be positive")
        if self.kind == "moon" and (self.m is None or self.m < 1):
            raise InvalidArgumentError("moon scheme needs a resample size m >= 1")

    def rate(self, n: int) -> float:
        return self.alpha if self.alpha is not None else n ** -0.5


def draw_weights(scheme: WeightScheme, n: int, seed=None) -> np.ndarray:
    if n < 1:
        raise InvalidArgumentError("n must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if scheme.kind == "bayesian":
        return rng.exponential(1.0 / scheme.rate(n), size=n)
    size = n if scheme.kind == "naive" else scheme.m
    if scheme.kind == "moon" and size > n:
        raise InvalidArgumentError(f"moon resample size m={size} exceeds n={n}")
    return rng.multinomial(size, np.full(n, 1.0 / n)).astype(float)


def _check_weights(w, n):
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise InvalidArgumentError(f"weights have shape {w.shape}, expected ({n},)")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise InvalidArgumentError("weights must be finite and nonnegative")
    return w


def bootstrap_gamma(A, X, Lambda_hat, sig: Signature, w) -> np.ndarray:
    """Weighted least squares of ``A - Lambda I_qs Lambda^T`` on the covariates.

    Pair ``(i, j)`` gets weight ``w_i w_j``; with unit weights this is the
    ordinary point-estimate update.
    """
    A, X = _check_inputs(A, X)
    n = A.shape[0]
    w = _check_weights(w, n)
    if X.shape[0] == 0:
        return np.zeros(0)
    design, (iu, ju) = _pair_design(X, n)
    pw = w[iu] * w[ju]
    if not pw.sum() > 0:
        raise InvalidArgumentError("pair weights sum to zero")
    R = latent_kernel(Lambda_hat, sig)
    return weighted_least_squares(design, (A - R)[iu, ju], pw)


def bootstrap_latent(A, X, gamma_star, w, d: int, impute_diagonal: bool = True, diagonal=None):
    """De-weighted embedding of ``D_w (A - sum_l gamma_l X_l) D_w`` at dimension ``d``.

    With ``impute_diagonal`` the diagonal of the weighted matrix is treated
    as missing, as in the point estimate; ``diagonal`` (unweighted) seeds the
    imputation.  Rows with zero weight have no defined position and are
    returned as NaN.

    Returns
    -------
    Lambda_star : ndarray, shape (n, d)
    sig : Signature
    """
    A, X = _check_inputs(A, X)
    n = A.shape[0]
    w = _check_weights(w, n)
    Y = A - covariate_effect(gamma_star, X) if X.shape[0] else A
    root = np.sqrt(w)
    Yw = root[:, None] * Y * root[None, :]
    if impute_diagonal:
        seed_diag = None if diagonal is None else w * np.asarray(diagonal, dtype=float)
        emb = offdiagonal_embed(Yw, d, diagonal=seed_diag)
    else:
        emb = spectral_embed(Yw, d)
    Lambda = np.full_like(emb.Lambda, np.nan)
    pos = w > 0
    Lambda[pos] = emb.Lambda[pos] / root[pos, None]
    return Lambda, emb.signature


def monotone_order(theta) -> np.ndarray:
    """Cluster order with nonincreasing ``diag(theta)``; ties keep label order."""
    return np.argsort(-np.diag(np.atleast_2d(theta)), kind="stable")


def relabel_monotone(blocks: ResidualBlocks) -> ResidualBlocks:
    """Permute clusters so the diagonal of ``theta`` is nonincreasing."""
    order = monotone_order(blocks.theta)
    new_label = np.empty_like(order)
    new_label[order] = np.arange(order.size)
    return ResidualBlocks(
        blocks.means[order],
        new_label[blocks.assignments],
        blocks.theta[np.ix_(order, order)],
        blocks.signature,
    )


def confidence_interval(samples, point: float, level: float = 0.95,
                        method: str = "percentile") -> tuple:
    """Bootstrap interval from replicate values.

    Quantiles interpolate linearly between order statistics.  ``basic``
    reflects the percentile interval about ``point``;
    ``normal_bias_corrected`` is ``point - bias +/- z sd`` with
    ``bias = mean(samples) - point``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise InvalidArgumentError("need at least two bootstrap samples")
    if not 0 < level < 1:
        raise InvalidArgumentError("level must lie in (0, 1)")
    lo_q, hi_q = np.quantile(x, [(1 - level) / 2, (1 + level) / 2], method="linear")
    if method == "percentile":
        return float(lo_q), float(hi_q)
    if method == "basic":
        return float(2 * point - hi_q), float(2 * point - lo_q)
    if method == "normal_bias_corrected":
        center = 2 * point - x.mean()
        half = norm.ppf((1 + level) / 2) * x.std(ddof=1)
        return float(center - half), float(center + half)
    raise InvalidArgumentError(f"unknown interval method {method!r}")


@dataclass
class BootstrapEnsemble:
    """Replicate estimates, aligned by monotone relabeling.

    ``thetas`` and ``means`` are indexed by relabeled cluster; ``probs``
    holds the fitted edge probability of each tracked pair.  The ``point_*``
    fields carry the (relabeled) point estimates the intervals refer to.
    """

    B: int
    gammas: np.ndarray
    thetas: np.ndarray
    means: np.ndarray
    probs: np.ndarray
    seeds: list
    tracked_pairs: list
    point_gamma: np.ndarray
    point_theta: np.ndarray
    point_probs: np.ndarray
    failures: int = 0
    scheme: WeightScheme = field(default_factory=WeightScheme)
    elapsed: float = 0.0

    def parameters(self):
        """Yield ``(name, point, samples)`` for every scalar parameter.

        Names use 1-based indices, e.g. ``theta[1,2]`` or ``P[3,7]``.
        """
        for l in range(self.gammas.shape[1]):
            yield f"gamma[{l + 1}]", float(self.point_gamma[l]), self.gammas[:, l]
        K = self.point_theta.shape[0]
        for a in range(K):
            for b in range(a, K):
                yield f"theta[{a + 1},{b + 1}]", float(self.point_theta[a, b]), self.thetas[:, a, b]
        for t, (i, j) in enumerate(self.tracked_pairs):
            yield f"P[{i + 1},{j + 1}]", float(self.point_probs[t]), self.probs[:, t]

    def intervals(self, level: float = 0.95, methods=CI_METHODS) -> list:
        rows = []
        for name, point, samples in self.parameters():
            row = {"parameter": name, "estimate": point}
            for m in methods:
                row[m] = list(confidence_interval(samples, point, level, m))
            rows.append(row)
        return rows


def _align_signs(reference, target):
    """Flip columns of ``reference`` to agree in sign with ``target`` on finite rows."""
    ok = np.all(np.isfinite(target), axis=1)
    s = np.sign(np.sum(reference[ok] * target[ok], axis=0))
    return reference * np.where(s == 0, 1.0, s)


def _pair_probs(gamma, X, theta, z, pairs):
    """``x_ij' gamma + theta[z_i, z_j]`` for each tracked pair."""
    if not pairs:
        return np.zeros(0)
    i, j = np.array(pairs).T
    out = theta[z[i], z[j]]
    if X.shape[0]:
        out = out + np.tensordot(gamma, X[:, i, j], axes=(0, 0))
    return out


def run_bootstrap(fit: FitResult, blocks: ResidualBlocks, A, X, B: int = 999,
                  scheme: WeightScheme | None = None, seed: int = 0, tracked_pairs=(),
                  cov_model: str = "full", n_init: int = 3, threads: int = 1,
                  unit_weights: bool = False, impute_diagonal: bool = True) -> BootstrapEnsemble:
    """Draw ``B`` weighted replicates of the whole estimator.

    The embedding dimension, ``K`` and the mixture covariance family are
    frozen at the point estimate.  The mixture is refit to the de-weighted
    positions with each node's likelihood weighted by its bootstrap weight,
    and tracked pairs keep their point-estimate blocks.  Replicate ``b`` draws from
    ``default_rng([seed, b])`` so results do not depend on scheduling.
    Failed replicates are skipped; more than 10% failures raise
    :class:`EnsembleQualityError`.  ``unit_weights`` replaces the weights
    by ones, which reproduces the point estimate in every replicate.
    ``impute_diagonal`` should match the setting used for the point fit.
    """
    if B < 1:
        raise InvalidArgumentError("B must be at least 1")
    if cov_model not in COV_MODELS:
        raise InvalidArgumentError(f"unknown covariance model {cov_model!r}")
    scheme = scheme or WeightScheme()
    A, X = _check_inputs(A, X)
    n = A.shape[0]
    pairs = [(int(i), int(j)) for i, j in tracked_pairs]
    for i, j in pairs:
        if not (0 <= i < n and 0 <= j < n and i != j):
            raise InvalidArgumentError(f"tracked pair ({i}, {j}) is not an off-diagonal node pair")
    d, K, sig = fit.signature.d, blocks.K, fit.signature
    point = relabel_monotone(blocks)
    point_diag = np.sum(fit.Lambda**2 * sig.diagonal(), axis=1)

    def replicate(b):
        rng = np.random.default_rng([int(seed), b])
        w = np.ones(n) if unit_weights else draw_weights(scheme, n, rng)
        g = bootstrap_gamma(A, X, fit.Lambda, sig, w)
        Lam, sig_b = bootstrap_latent(A, X, g, w, d, impute_diagonal, point_diag)
        valid = w > 0
        gmm = fit_gmm(Lam[valid], K, cov_model, rng, n_init=n_init, sample_weight=w[valid])
        z = np.empty(n, dtype=int)
        z[valid] = gmm.assignments
        if not valid.all():
            # Zero-weight nodes: nearest cluster mean in point-estimate coordinates.
            ref = _align_signs(fit.Lambda, Lam)
            dist = np.sum((ref[~valid, None, :] - gmm.means[None]) ** 2, axis=2)
            z[~valid] = np.argmin(dist, axis=1)
        rb = relabel_monotone(ResidualBlocks.from_means(gmm.means, z, sig_b))
        # Tracked pairs keep their point-estimate blocks, so each replicate
        # resamples the same block-level probability.
        return g, rb.theta, rb.means, _pair_probs(g, X, rb.theta, point.assignments, pairs)

    def guarded(b):
        try:
            return replicate(b)
        except (NetPLSError, np.linalg.LinAlgError) as exc:
            log.warning("bootstrap replicate %d failed: %s", b, exc)
            return None

    t0 = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(guarded, range(B)))
    else:
        results = [guarded(b) for b in range(B)]
    elapsed = time.perf_counter() - t0

    kept = [b for b, r in enumerate(results) if r is not None]
    failures = B - len(kept)
    if failures > MAX_FAILURE_RATE * B:
        raise EnsembleQualityError(f"{failures} of {B} bootstrap replicates failed")
    p = X.shape[0]
    return BootstrapEnsemble(
        B=len(kept),
        gammas=np.array([results[b][0] for b in kept]).reshape(len(kept), p),
        thetas=np.array([results[b][1] for b in kept]).reshape(len(kept), K, K),
        means=np.array([results[b][2] for b in kept]).reshape(len(kept), K, d),
        probs=np.array([results[b][3] for b in kept]).reshape(len(kept), len(pairs)),
        seeds=[[int(seed), b] for b in kept],
        tracked_pairs=pairs,
        point_gamma=fit.gamma.copy(),
        point_theta=point.theta,
        point_probs=_pair_probs(fit.gamma, X, point.theta, point.assignments, pairs),
        failures=failures,
        scheme=scheme,
        elapsed=elapsed,
    )
