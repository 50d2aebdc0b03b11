"""Iterative profile least squares estimator.

Each iteration embeds the covariate-adjusted matrix ``Y = A - sum_l gamma_l X_l``
to get latent positions and then refits ``gamma`` by least squares on
``A - Lambda I_qs Lambda^T``.  Only node pairs ``i < j`` enter the loss.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InvalidArgumentError, NetPLSError, NumericalFailure, SingularDesignError
from .model import ModelParams, Signature, as_covariate_stack, covariate_effect, latent_kernel
from .spectral import offdiagonal_embed, spectral_embed

log = logging.getLogger(__name__)


@dataclass
class FitConfig:
    """Settings for :func:`fit`.

    ``tol`` is an absolute tolerance on the change of the least squares
    objective; ``None`` means ``1e-8`` times the number of node pairs.
    ``d`` fixes the embedding dimension, otherwise it is re-selected every
    iteration unless ``freeze_d`` is set.  With ``impute_diagonal`` the
    diagonal of ``A - sum_l gamma_l X_l``, which the loss never sees, is
    replaced by that of the previous latent fit before each embedding;
    turning it off embeds the hollow matrix as is.
    """

    max_iter: int = 500
    tol: float | None = None
    num_inits: int = 20
    init_range: tuple = (0.15, 2.0)
    d: int | None = None
    max_d: int | None = None
    freeze_d: bool = False
    seed: int = 0
    threads: int = 1
    impute_diagonal: bool = True

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidArgumentError("max_iter must be at least 1")
        if self.tol is not None and not self.tol > 0:
            raise InvalidArgumentError("tol must be positive")
        if self.num_inits < 1:
            raise InvalidArgumentError("num_inits must be at least 1")
        lo, hi = self.init_range
        if not lo < hi and self.num_inits > 1:
            raise InvalidArgumentError("init_range lower bound must be below the upper bound")
        if self.d is not None and self.d < 1:
            raise InvalidArgumentError("d must be a positive integer")

    def tolerance(self, n: int) -> float:
        return self.tol if self.tol is not None else 1e-8 * n * (n - 1) / 2

    def starting_values(self) -> np.ndarray:
        lo, hi = self.init_range
        return np.linspace(lo, hi, self.num_inits)


@dataclass
class IterationRecord:
    gamma: np.ndarray
    objective: float
    d: int
    q: int
    s: int


@dataclass
class FitResult:
    """Output of the estimator.

    ``params`` pairs the latent positions of an iteration with the
    coefficient vector refitted on them, so ``gamma`` is the exact least
    squares solution given ``Lambda``.
    """

    params: ModelParams
    objective: float
    trace: list
    converged: bool
    init_used: float
    start_objectives: list = field(default_factory=list)
    start_inits: list = field(default_factory=list)
    iterations: int = 0

    @property
    def gamma(self) -> np.ndarray:
        return self.params.gamma

    @property
    def Lambda(self) -> np.ndarray:
        return self.params.Lambda

    @property
    def signature(self) -> Signature:
        return self.params.signature


def _check_inputs(A, X):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"adjacency must be square, got {A.shape}")
    n = A.shape[0]
    if X is None:
        X = np.zeros((0, n, n))
    X = as_covariate_stack(X, n) if np.size(X) else np.zeros((0, n, n))
    return A, X


def _pair_design(X, n):
    iu, ju = np.triu_indices(n, 1)
    return X[:, iu, ju].T, (iu, ju)


def objective(gamma, Lambda, sig: Signature, X, A) -> float:
    """Least squares loss ``sum_{i<j} (A_ij - x_ij^T gamma - alpha_i^T I_qs alpha_j)^2``."""
    A, X = _check_inputs(A, X)
    n = A.shape[0]
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    Lambda = np.asarray(Lambda, dtype=float)
    if Lambda.shape[0] != n:
        raise InvalidArgumentError(f"Lambda has {Lambda.shape[0]} rows, expected {n}")
    if gamma.size != X.shape[0]:
        raise InvalidArgumentError(f"gamma has length {gamma.size}, expected {X.shape[0]}")
    resid = A - latent_kernel(Lambda, sig)
    if X.shape[0]:
        resid = resid - covariate_effect(gamma, X)
    iu, ju = np.triu_indices(n, 1)
    return float(np.sum(resid[iu, ju] ** 2))


def _check_rank(design):
    _, sv, vt = np.linalg.svd(design, full_matrices=False)
    p = design.shape[1]
    tol = sv.max(initial=0.0) * max(design.shape) * np.finfo(float).eps
    rank = int(np.sum(sv > tol))
    if rank < p:
        null = vt[rank:]
        cols = np.flatnonzero(np.any(np.abs(null) > 1e-8, axis=0))
        raise SingularDesignError(
            f"covariate design has rank {rank} < {p}; deficient columns {cols.tolist()}",
            cols,
        )


def weighted_least_squares(design, response, pair_weights=None) -> np.ndarray:
    """Solve ``min_b sum_r w_r (y_r - design_r b)^2``.

    Raises
    ------
    SingularDesignError
        If the (weighted) design has deficient column rank; ``columns``
        lists the covariates spanning the null space.
    """
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if pair_weights is not None:
        root = np.sqrt(np.asarray(pair_weights, dtype=float))
        design = design * root[:, None]
        response = response * root
    _check_rank(design)
    coef, *_ = np.linalg.lstsq(design, response, rcond=None)
    return coef


class _PairRegression:
    """Least squares on a fixed design, factorized once."""

    def __init__(self, design):
        _check_rank(design)
        self.design = design
        self.q, self.r = np.linalg.qr(design)

    def solve(self, response):
        return scipy.linalg.solve_triangular(self.r, self.q.T @ response)


def gamma_update(A, X, R) -> np.ndarray:
    """Least squares coefficients of ``A - R`` on the covariates, over pairs ``i < j``."""
    A, X = _check_inputs(A, X)
    n = A.shape[0]
    R = np.asarray(R, dtype=float)
    if R.shape != A.shape:
        raise InvalidArgumentError(f"residual kernel has shape {R.shape}, expected {A.shape}")
    if X.shape[0] == 0:
        return np.zeros(0)
    design, (iu, ju) = _pair_design(X, n)
    return weighted_least_squares(design, (A - R)[iu, ju])


def fit_once(A, X, config: FitConfig | None = None, init_gamma=None) -> FitResult:
    """Run the alternating embedding / regression iteration from one start."""
    config = config or FitConfig()
    A, X = _check_inputs(A, X)
    n, p = A.shape[0], X.shape[0]
    if p == 0:
        emb = (offdiagonal_embed(A, config.d, config.max_d) if config.impute_diagonal
               else spectral_embed(A, config.d, config.max_d))
        params = ModelParams(np.zeros(0), emb.Lambda, emb.signature)
        obj = objective(params.gamma, params.Lambda, params.signature, X, A)
        rec = IterationRecord(params.gamma, obj, emb.d, emb.signature.q, emb.signature.s)
        return FitResult(params, obj, [rec], True, float("nan"), iterations=1)

    gamma = np.zeros(p) if init_gamma is None else np.atleast_1d(np.asarray(init_gamma, dtype=float))
    if gamma.shape != (p,):
        raise InvalidArgumentError(f"init_gamma has length {gamma.size}, expected {p}")
    design, (iu, ju) = _pair_design(X, n)
    regression = _PairRegression(design)
    a_pairs = A[iu, ju]
    tol = config.tolerance(n)
    d = config.d

    trace = []
    best = None
    converged = False
    prev_obj = None
    diag = None
    for m in range(config.max_iter):
        try:
            Y = A - covariate_effect(gamma, X)
            if diag is not None:
                np.fill_diagonal(Y, diag)
            emb = spectral_embed(Y, d, config.max_d)
            if config.freeze_d and d is None:
                d = emb.d
            R = latent_kernel(emb.Lambda, emb.signature)
            if config.impute_diagonal:
                diag = np.diag(R).copy()
            gamma_next = regression.solve(a_pairs - R[iu, ju])
        except SingularDesignError as exc:
            raise SingularDesignError(f"iteration {m}: {exc}", exc.columns) from exc
        except NetPLSError as exc:
            raise NumericalFailure(f"iteration {m}: {exc}") from exc
        resid = a_pairs - design @ gamma_next - R[iu, ju]
        obj = float(resid @ resid)
        if not np.isfinite(obj):
            raise NumericalFailure(f"iteration {m}: objective is not finite")
        trace.append(IterationRecord(gamma_next, obj, emb.d, emb.signature.q, emb.signature.s))
        # Objectives are only comparable at equal dimension.
        if best is None or emb.d != best[2].d or obj < best[0]:
            best = (obj, gamma_next, emb)
        gamma = gamma_next
        if prev_obj is not None and abs(obj - prev_obj) < tol:
            converged = True
            break
        prev_obj = obj

    # A converged run returns its fixed point.  Without diagonal imputation
    # the objective can creep up by O(|delta gamma|^2) near it because the
    # embedding also fits the hollow diagonal, so the best-so-far iterate is
    # only a fallback for runs that stop at max_iter.
    obj, gamma_best, emb = (obj, gamma_next, emb) if converged else best
    params = ModelParams(gamma_best, emb.Lambda, emb.signature)
    init = float(init_gamma[0]) if init_gamma is not None and np.size(init_gamma) else float("nan")
    return FitResult(params, obj, trace, converged, init, iterations=len(trace))


def fit(A, X, config: FitConfig | None = None) -> FitResult:
    """Multi-start estimator: run :func:`fit_once` from constant starts ``c * 1``.

    The converged start with the smallest final objective wins, ties going
    to the smaller ``c``; non-converged starts are only considered when no
    start converged.  Objectives of all starts are kept on the result.
    """
    config = config or FitConfig()
    A, X = _check_inputs(A, X)
    p = X.shape[0]
    if p == 0:
        return fit_once(A, X, config)
    inits = config.starting_values()

    def run(c):
        try:
            return fit_once(A, X, config, np.full(p, c))
        except NetPLSError as exc:
            log.warning("start c=%g failed: %s", c, exc)
            return exc

    if config.threads > 1 and len(inits) > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            results = list(pool.map(run, inits))
    else:
        results = [run(c) for c in inits]

    ok = [i for i, r in enumerate(results) if isinstance(r, FitResult)]
    if not ok:
        raise NumericalFailure(f"all {len(inits)} starts failed; first error: {results[0]}")
    # Starts still drifting at max_iter only compete when none converged.
    pool = [i for i in ok if results[i].converged] or ok
    i_best = min(pool, key=lambda i: (results[i].objective, i))
    best = results[i_best]
    best.start_inits = [float(c) for c in inits]
    best.start_objectives = [r.objective if isinstance(r, FitResult) else float("nan") for r in results]
    return best
