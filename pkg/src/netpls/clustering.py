"""Gaussian mixture clustering of latent positions and the residual block matrix.

EM with k-means++ seeding for three covariance families.  ``bic`` follows
the "lower is better" convention ``-2 loglik + k log n``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateClusterError, InvalidArgumentError
from .model import ResidualBlocks, Signature, latent_kernel

COV_MODELS = ("spherical", "diagonal", "full")
_LOG_2PI = np.log(2 * np.pi)
# Relative ridge on covariance diagonals.  Small enough to leave real
# clusters untouched, large enough that a component sitting on one point
# cannot buy a likelihood spike worth its BIC penalty.
COV_RIDGE = 1e-6


@dataclass
class GmmFit:
    K: int
    cov_model: str
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    loglik: float
    bic: float
    responsibilities: np.ndarray = field(repr=False)
    loglik_trace: list = field(default_factory=list, repr=False)
    converged: bool = True
    bic_table: dict | None = field(default=None, repr=False)

    @property
    def assignments(self) -> np.ndarray:
        return np.argmax(self.responsibilities, axis=1)

    @property
    def mean_uncertainty(self) -> float:
        return float(np.mean(1.0 - self.responsibilities.max(axis=1)))


def n_parameters(K: int, d: int, cov_model: str) -> int:
    cov = {"spherical": K, "diagonal": K * d, "full": K * d * (d + 1) // 2}[cov_model]
    return (K - 1) + K * d + cov


def _kmeans_pp(X, K, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def _to_full(cov, cov_model, K, d):
    if cov_model == "spherical":
        return cov[:, None, None] * np.eye(d)
    if cov_model == "diagonal":
        return np.einsum("kd,de->kde", cov, np.eye(d))
    return cov


def _logsumexp(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def _log_gauss(X, XX, means, cov, cov_model):
    """log N(x_i | mu_k, Sigma_k) for a batch of restarts, shape (R, n, K).

    Quadratic forms are expanded into matrix products against ``X`` and the
    flattened outer products ``XX`` so no (R, n, K, d) temporary is formed.
    """
    d = X.shape[1]
    if cov_model == "spherical":
        prec = 1.0 / cov                                        # (R, K)
        quad = (XX.trace_part[None, :, None] - 2 * X @ np.swapaxes(means, 1, 2)
                + np.sum(means**2, axis=2)[:, None, :]) * prec[:, None, :]
        logdet = d * np.log(cov)
    elif cov_model == "diagonal":
        prec = 1.0 / cov                                        # (R, K, d)
        quad = (XX.squares @ np.swapaxes(prec, 1, 2)
                - 2 * X @ np.swapaxes(means * prec, 1, 2)
                + np.sum(means**2 * prec, axis=2)[:, None, :])
        logdet = np.sum(np.log(cov), axis=2)
    else:
        sign, logdet = np.linalg.slogdet(cov)
        if np.any(sign <= 0):
            raise np.linalg.LinAlgError("covariance is not positive definite")
        prec = np.linalg.inv(cov)                               # (R, K, d, d)
        pm = np.einsum("rkde,rke->rkd", prec, means)
        quad = (XX.outer @ np.swapaxes(prec.reshape(prec.shape[:2] + (d * d,)), 1, 2)
                - 2 * X @ np.swapaxes(pm, 1, 2)
                + np.sum(means * pm, axis=2)[:, None, :])
    quad = np.maximum(quad, 0.0)
    return -0.5 * (d * _LOG_2PI + logdet[:, None, :] + quad)


def _ridge_penalty(cov, cov_model, d, reg):
    """``reg / 2 * trace(Sigma_k^{-1})`` per component, shape (R, K).

    The ridged M-step ``Sigma = S + reg I`` maximizes the EM objective of
    the density ``N(x | mu, Sigma) exp(-reg / 2 tr Sigma^{-1})``, so E-steps
    and the convergence trace use that density and EM stays monotone.
    """
    if cov_model == "spherical":
        tr = d / cov
    elif cov_model == "diagonal":
        tr = np.sum(1.0 / cov, axis=-1)
    else:
        tr = np.trace(np.linalg.inv(cov), axis1=-2, axis2=-1)
    return 0.5 * reg * tr


def _m_step(X, XX, resp, cov_model, reg, sw):
    """Batched M-step with per-point weights ``sw``; also returns a mask of
    restarts with an emptied component."""
    n, d = X.shape
    resp = resp * sw[None, :, None]
    nk = resp.sum(axis=1)
    empty = np.any(nk < 1e-10 * n, axis=1)
    nk = np.where(nk < 1e-10 * n, 1.0, nk)
    weights = nk / sw.sum()
    means = np.swapaxes(resp, 1, 2) @ X / nk[:, :, None]
    if cov_model == "full":
        second = (np.swapaxes(resp, 1, 2) @ XX.outer).reshape(means.shape + (d,))
        cov = second / nk[:, :, None, None] - means[..., :, None] * means[..., None, :]
        cov = 0.5 * (cov + np.swapaxes(cov, -1, -2)) + reg * np.eye(d)
    else:
        sq = np.swapaxes(resp, 1, 2) @ XX.squares / nk[:, :, None] - means**2
        sq = np.maximum(sq, 0.0)
        cov = sq + reg if cov_model == "diagonal" else sq.mean(axis=2) + reg
    return weights, means, cov, empty


class _Moments:
    """Per-point squares and outer products reused by every EM step."""

    def __init__(self, X):
        self.squares = X**2
        self.trace_part = self.squares.sum(axis=1)
        self.outer = (X[:, :, None] * X[:, None, :]).reshape(X.shape[0], -1)


def _em(X, K, cov_model, rng, n_init, max_iter, tol, reg, sw):
    """Run ``n_init`` k-means++-seeded EM restarts side by side.

    Returns the parameters of every restart, its trace of the ridge-penalized
    loglik, a converged flag and a failed flag (a component emptied out).
    """
    n = X.shape[0]
    XX = _Moments(X)
    resp = np.zeros((n_init, n, K))
    for r in range(n_init):
        centers = _kmeans_pp(X, K, rng)
        dist = np.sum((X[:, None, :] - centers[None]) ** 2, axis=2)
        resp[r, np.arange(n), np.argmin(dist, axis=1)] = 1.0
    weights, means, cov, failed = _m_step(X, XX, resp, cov_model, reg, sw)
    traces = [[] for _ in range(n_init)]
    converged = np.zeros(n_init, dtype=bool)
    active = ~failed
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if not idx.size:
            break
        logp = (_log_gauss(X, XX, means[idx], cov[idx], cov_model) + np.log(weights[idx])[:, None, :]
                - _ridge_penalty(cov[idx], cov_model, X.shape[1], reg)[:, None, :])
        norm = _logsumexp(logp, axis=2)
        ll = norm @ sw
        resp[idx] = np.exp(logp - norm[:, :, None])
        for j, r in enumerate(idx):
            tr = traces[r]
            if tr and abs(ll[j] - tr[-1]) <= tol * max(abs(ll[j]), 1.0):
                converged[r] = True
                active[r] = False
            tr.append(float(ll[j]))
        idx = np.flatnonzero(active)
        if not idx.size:
            break
        w2, m2, c2, empty = _m_step(X, XX, resp[idx], cov_model, reg, sw)
        failed[idx[empty]] = True
        active[idx[empty]] = False
        keep, idx = ~empty, idx[~empty]
        weights[idx], means[idx], cov[idx] = w2[keep], m2[keep], c2[keep]
    return weights, means, cov, resp, traces, converged, failed


def _reg_scale(X):
    d = X.shape[1]
    tr = np.trace(np.atleast_2d(np.cov(X.T, bias=True))) / d if X.shape[0] > 1 else 0.0
    if tr > 0:
        return COV_RIDGE * tr
    return COV_RIDGE * max(float(np.mean(X**2)), 1.0)


def fit_gmm(points, K: int, cov_model: str = "full", seed=None, n_init: int = 10,
            max_iter: int = 500, tol: float = 1e-8, sample_weight=None) -> GmmFit:
    """Fit a K-component Gaussian mixture by EM, keeping the best of ``n_init`` restarts.

    Covariances receive a ridge of ``COV_RIDGE * trace(cov(points)) / d`` so
    coincident points do not make the likelihood singular.  ``loglik_trace``
    follows the objective EM actually ascends, which includes the ridge
    factor; ``loglik`` and ``bic`` are the plain mixture likelihood.

    ``sample_weight`` multiplies each point's loglik contribution, so the
    M-step solves the weighted score equations.  Weights are rescaled to
    mean one; ``None`` means all ones.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if not 1 <= K <= n:
        raise InvalidArgumentError(f"need 1 <= K <= n, got K={K}, n={n}")
    if cov_model not in COV_MODELS:
        raise InvalidArgumentError(f"unknown covariance model {cov_model!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if sample_weight is None:
        sw = np.ones(n)
    else:
        sw = np.asarray(sample_weight, dtype=float)
        if sw.shape != (n,) or not np.all(np.isfinite(sw)) or np.any(sw < 0) or not sw.sum() > 0:
            raise InvalidArgumentError("sample_weight must be n finite nonnegative values, not all zero")
        sw = sw * (n / sw.sum())
    reg = _reg_scale(X)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        try:
            weights, means, cov, resp, traces, converged, failed = _em(
                X, K, cov_model, rng, n_init, max_iter, tol, reg, sw
            )
        except np.linalg.LinAlgError as exc:
            raise DegenerateClusterError(f"covariance collapse for K={K}, {cov_model}: {exc}") from exc
    ok = [r for r in range(n_init) if not failed[r] and traces[r] and np.isfinite(traces[r][-1])]
    if not ok:
        raise DegenerateClusterError(f"all {n_init} EM restarts degenerated for K={K}, {cov_model}")
    # Highest final objective, earliest restart on ties.
    best = max(ok, key=lambda r: (traces[r][-1], -r))
    trace = traces[best]
    weights, means, cov, resp = weights[best], means[best], cov[best], resp[best]
    # BIC uses the plain loglik, without the ridge factor of the trace.
    with np.errstate(divide="ignore"):
        logp = _log_gauss(X, _Moments(X), means[None], cov[None], cov_model)[0] + np.log(weights)
    ll = float(_logsumexp(logp, axis=1) @ sw)
    converged = bool(converged[best])
    return GmmFit(
        K=K,
        cov_model=cov_model,
        weights=weights,
        means=means,
        covariances=_to_full(cov, cov_model, K, d),
        loglik=ll,
        bic=-2 * ll + n_parameters(K, d, cov_model) * np.log(n),
        responsibilities=resp,
        loglik_trace=trace,
        converged=converged,
    )


def select_k(points, k_max: int = 9, cov_models=COV_MODELS, seed=0, n_init: int = 10,
             threads: int = 1) -> GmmFit:
    """Best BIC over ``K = 1..k_max`` and the given covariance families.

    Each (K, family) cell gets its own seed derived from ``seed``; ties go
    to smaller K, then to the earlier family.  In one dimension the three
    families coincide and only the first is fitted.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if k_max < 1:
        raise InvalidArgumentError("k_max must be at least 1")
    models = [m for m in COV_MODELS if m in cov_models]
    if not models:
        raise InvalidArgumentError(f"no known covariance model in {cov_models!r}")
    if X.shape[1] == 1:
        models = models[:1]
    k_max = min(k_max, X.shape[0])
    cells = [(K, fam) for K in range(1, k_max + 1) for fam in range(len(models))]

    def run(cell):
        K, fam = cell
        rng = np.random.default_rng([int(seed), K, fam])
        try:
            return fit_gmm(X, K, models[fam], rng, n_init=n_init)
        except DegenerateClusterError:
            return None

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            fits = list(pool.map(run, cells))
    else:
        fits = [run(c) for c in cells]
    table = {(K, models[fam]): f.bic for (K, fam), f in zip(cells, fits) if f is not None}
    ok = [(f.bic, K, fam) for (K, fam), f in zip(cells, fits) if f is not None]
    if not ok:
        raise DegenerateClusterError("every mixture fit degenerated")
    _, K, fam = min(ok)
    best = fits[cells.index((K, fam))]
    best.bic_table = table
    return best


def residual_blocks(gmm: GmmFit, sig: Signature) -> ResidualBlocks:
    """``Theta_ab = mu_a^T I_qs mu_b`` from the mixture means."""
    if gmm.means.shape[1] != sig.d:
        raise InvalidArgumentError(
            f"mixture means are {gmm.means.shape[1]}-dimensional, signature has d={sig.d}"
        )
    return ResidualBlocks(gmm.means, gmm.assignments, latent_kernel(gmm.means, sig), sig)


def cluster_latent(Lambda, sig: Signature, K: int | None = None, k_max: int = 9,
                   cov_models=COV_MODELS, seed=0, n_init: int = 10, threads: int = 1):
    """Cluster latent positions (BIC-selected K unless given) and build the blocks.

    Returns
    -------
    gmm : GmmFit
    blocks : ResidualBlocks
    """
    if K is None:
        gmm = select_k(Lambda, k_max, cov_models, seed, n_init, threads)
    else:
        X = np.asarray(Lambda, dtype=float)
        models = [m for m in COV_MODELS if m in cov_models]
        if X.ndim == 1 or X.shape[1] == 1:
            models = models[:1]
        fits = []
        for fam, model in enumerate(models):
            try:
                fits.append(fit_gmm(X, K, model, np.random.default_rng([int(seed), K, fam]), n_init=n_init))
            except DegenerateClusterError:
                continue
        if not fits:
            raise DegenerateClusterError(f"every mixture fit with K={K} degenerated")
        gmm = min(fits, key=lambda f: f.bic)
    return gmm, residual_blocks(gmm, sig)
