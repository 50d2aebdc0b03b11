"""Symmetric eigendecomposition, the rank-d filter and dimension selection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InvalidArgumentError, NumericalFailure
from .model import Signature

DEFAULT_MAX_DIM = 20


@dataclass
class EigenSystem:
    values: np.ndarray
    vectors: np.ndarray


@dataclass
class Embedding:
    """Adjacency spectral embedding ``Lambda = U |S|^{1/2}``.

    Columns follow the kept eigenvalues in decreasing signed order, so the
    first ``signature.q`` columns are assortative.
    """

    Lambda: np.ndarray
    signature: Signature
    kept_values: np.ndarray
    magnitudes: np.ndarray = field(repr=False, default=None)
    near_zero: bool = False
    degenerate: bool = False

    @property
    def d(self) -> int:
        return self.signature.d


def _check_symmetric(B, rtol=1e-10) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {B.shape}")
    if not np.all(np.isfinite(B)):
        raise InvalidArgumentError("matrix contains non-finite entries")
    scale = np.linalg.norm(B)
    if np.linalg.norm(B - B.T) > rtol * max(scale, np.finfo(float).tiny):
        raise InvalidArgumentError("matrix is not symmetric")
    return B


def symmetric_eigendecomposition(B, rtol: float = 1e-10) -> EigenSystem:
    """Full eigendecomposition of a real symmetric matrix (ascending values)."""
    B = _check_symmetric(B, rtol)
    try:
        values, vectors = scipy.linalg.eigh(0.5 * (B + B.T), driver="evd", check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"eigendecomposition did not converge: {exc}") from exc
    return EigenSystem(values, vectors)


def _kept_order(values: np.ndarray, d: int, zero_tol: float):
    """Indices of the ``d`` largest-magnitude eigenvalues in decreasing signed order.

    Values with ``|lambda| < zero_tol`` count as zero, i.e. as positive for
    signature purposes.  Ties break on the original index.
    """
    n = values.size
    mags = np.abs(values)
    order = np.arange(n)
    by_mag = np.lexsort((order, -mags))[:d]
    eff = np.where(mags < zero_tol, 0.0, values)
    kept = by_mag[np.lexsort((by_mag, -eff[by_mag]))]
    return kept, eff[kept]


def _embed_from_eigs(eig: EigenSystem, d: int, zero_tol: float):
    idx, eff = _kept_order(eig.values, d, zero_tol)
    q = int(np.sum(eff >= 0))
    sig = Signature(q, d - q)
    vals = eig.values[idx]
    Lambda = eig.vectors[:, idx] * np.sqrt(np.abs(vals))
    return idx, sig, Lambda, bool(np.any(np.abs(vals) < zero_tol))


def rank_d_filter(B, d: int):
    """Keep the ``d`` largest-magnitude eigenpairs of ``B``.

    Returns
    -------
    filtered : ndarray
        ``U S U^T`` over the kept eigenpairs.
    sig : Signature
        Counts of kept positive and negative eigenvalues.
    emb : Embedding
        ``Lambda = U |S|^{1/2}`` with ``Lambda I_qs Lambda^T == filtered``.
    """
    eig = symmetric_eigendecomposition(B)
    n = eig.values.size
    if not 1 <= d <= n:
        raise InvalidArgumentError(f"d must lie in [1, {n}], got {d}")
    zero_tol = 1e-12 * np.linalg.norm(eig.values)
    idx, sig, Lambda, near_zero = _embed_from_eigs(eig, d, zero_tol)
    U = eig.vectors[:, idx]
    filtered = (U * eig.values[idx]) @ U.T
    emb = Embedding(
        Lambda=Lambda,
        signature=sig,
        kept_values=eig.values[idx],
        magnitudes=np.sort(np.abs(eig.values))[::-1],
        near_zero=near_zero,
    )
    return filtered, sig, emb


def zhu_ghodsi_profile(magnitudes, max_d: int | None = None) -> np.ndarray:
    """Profile log-likelihood of every split point ``d = 1..max_d``.

    The sorted values are split into a leading group of size ``d`` and the
    remainder; each group is Gaussian with its own mean and a shared
    (maximum-likelihood) variance.
    """
    x = np.asarray(magnitudes, dtype=float).ravel()
    m = x.size
    if m < 2:
        raise InvalidArgumentError("need at least two values for dimension selection")
    if np.any(np.diff(x) > 1e-12 * max(abs(x[0]), 1.0)):
        raise InvalidArgumentError("magnitudes must be sorted in nonincreasing order")
    max_d = m - 1 if max_d is None else int(min(max_d, m - 1))
    if max_d < 1:
        raise InvalidArgumentError("max_d must be at least 1")
    # Scale-equivariant variance floor above cumulative-sum rounding error;
    # exact ties then compare equal.
    floor = 1e-12 * max(float(np.mean(x**2)), np.finfo(float).tiny)
    d = np.arange(1, max_d + 1)
    csum, csq = np.cumsum(x), np.cumsum(x**2)
    head_rss = csq[d - 1] - csum[d - 1] ** 2 / d
    tail_n = m - d
    tail_rss = (csq[-1] - csq[d - 1]) - (csum[-1] - csum[d - 1]) ** 2 / tail_n
    rss = np.maximum(head_rss, 0.0) + np.maximum(tail_rss, 0.0)
    # Residual sums at the level of cumulative-sum rounding are zero.
    rss = np.where(rss < 1e-10 * csq[-1], 0.0, rss)
    var = np.maximum(rss / m, floor)
    out = -0.5 * m * np.log(2 * np.pi * var) - 0.5 * rss / var
    return out


def select_dimension_zhu_ghodsi(magnitudes, max_d: int | None = None) -> int:
    """Embedding dimension at the global maximum of the profile likelihood.

    Ties go to the smallest dimension.
    """
    prof = zhu_ghodsi_profile(magnitudes, max_d)
    best = prof.max()
    # Treat values equal up to rounding as ties.
    tol = 1e-10 * max(abs(best), 1.0)
    return int(np.flatnonzero(prof >= best - tol)[0]) + 1


def spectral_embed(Y, d: int | None = None, max_d: int | None = None) -> Embedding:
    """Embed a symmetric matrix, choosing ``d`` by Zhu-Ghodsi when not given.

    Dimension selection looks at the leading ``max_d + 1`` eigenvalue
    magnitudes (``max_d`` defaults to ``min(n - 1, 20)``); the bulk of a
    noisy spectrum otherwise drags the split point towards ``max_d``.

    A zero matrix yields a one-dimensional zero embedding flagged as
    degenerate instead of raising.
    """
    eig = symmetric_eigendecomposition(Y)
    n = eig.values.size
    mags = np.sort(np.abs(eig.values))[::-1]
    scale = np.linalg.norm(eig.values)
    if scale == 0.0:
        return Embedding(
            Lambda=np.zeros((n, 1)),
            signature=Signature(1, 0),
            kept_values=np.zeros(1),
            magnitudes=mags,
            near_zero=True,
            degenerate=True,
        )
    if d is None:
        if n < 2:
            d = 1
        else:
            limit = min(n - 1, DEFAULT_MAX_DIM) if max_d is None else min(max_d, n - 1)
            d = select_dimension_zhu_ghodsi(mags[: limit + 1], limit)
    if not 1 <= d <= n:
        raise InvalidArgumentError(f"d must lie in [1, {n}], got {d}")
    idx, sig, Lambda, near_zero = _embed_from_eigs(eig, d, 1e-12 * scale)
    return Embedding(
        Lambda=Lambda,
        signature=sig,
        kept_values=eig.values[idx],
        magnitudes=mags,
        near_zero=near_zero,
    )


def offdiagonal_embed(Y, d: int | None = None, max_d: int | None = None, diagonal=None,
                      max_sweeps: int = 100, tol: float = 1e-10) -> Embedding:
    """Embed ``Y`` treating its diagonal as missing.

    The diagonal is repeatedly replaced by that of the current rank-``d``
    fit (hard imputation) until it changes by less than ``tol`` relative to
    its size, so the result fits the off-diagonal entries only.  An optional
    ``diagonal`` seeds the first sweep instead of the diagonal of ``Y``.
    """
    Y = np.array(Y, dtype=float)
    if diagonal is not None:
        np.fill_diagonal(Y, diagonal)
    for _ in range(max(max_sweeps, 1)):
        emb = spectral_embed(Y, d, max_d)
        fitted = np.sum(emb.Lambda**2 * emb.signature.diagonal(), axis=1)
        change = np.max(np.abs(fitted - np.diag(Y)), initial=0.0)
        np.fill_diagonal(Y, fitted)
        if change <= tol * max(np.max(np.abs(fitted), initial=0.0), 1e-300):
            break
    return emb
