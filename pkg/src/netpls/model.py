"""Domain types and forward maps of the covariate-adjusted GRDPG model.

Edge probabilities are ``P_ij = x_ij^T gamma + alpha_i^T I_qs alpha_j`` for
``i < j``.  Edge covariates are stored as a dense ``(p, n, n)`` stack.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Signature:
    """Counts of assortative (``q``) and disassortative (``s``) dimensions."""

    q: int
    s: int = 0

    def __post_init__(self):
        if self.q < 0 or self.s < 0:
            raise InvalidArgumentError(f"signature counts must be nonnegative, got {self}")

    @property
    def d(self) -> int:
        return self.q + self.s

    def diagonal(self) -> np.ndarray:
        """Diagonal of ``I_qs`` as a float vector of +1/-1."""
        return np.concatenate([np.ones(self.q), -np.ones(self.s)])


@dataclass
class ModelParams:
    gamma: np.ndarray
    Lambda: np.ndarray
    signature: Signature

    def __post_init__(self):
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        self.Lambda = np.asarray(self.Lambda, dtype=float)
        if self.Lambda.ndim != 2 or self.Lambda.shape[1] != self.signature.d:
            raise InvalidArgumentError(
                f"Lambda has shape {self.Lambda.shape}, expected (n, {self.signature.d})"
            )

    @property
    def n(self) -> int:
        return self.Lambda.shape[0]

    def kernel_matrix(self) -> np.ndarray:
        """``Lambda I_qs Lambda^T``."""
        return latent_kernel(self.Lambda, self.signature)


@dataclass
class ResidualBlocks:
    """Cluster means, node labels and the block matrix ``Theta``.

    ``assignments`` are zero-based cluster indices.
    """

    means: np.ndarray
    assignments: np.ndarray
    theta: np.ndarray
    signature: Signature

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.assignments = np.asarray(self.assignments, dtype=int)
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        K = self.means.shape[0]
        if self.theta.shape != (K, K):
            raise InvalidArgumentError(f"theta has shape {self.theta.shape}, expected ({K}, {K})")
        if self.assignments.size and (self.assignments.min() < 0 or self.assignments.max() >= K):
            raise InvalidArgumentError("assignments must lie in [0, K)")

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @classmethod
    def from_means(cls, means, assignments, signature: Signature) -> "ResidualBlocks":
        means = np.atleast_2d(np.asarray(means, dtype=float))
        return cls(means, assignments, latent_kernel(means, signature), signature)

    def recomputed_theta(self) -> np.ndarray:
        return latent_kernel(self.means, self.signature)

    def expanded(self) -> np.ndarray:
        """The n x n matrix ``Theta[z_i, z_j]``."""
        z = self.assignments
        return self.theta[np.ix_(z, z)]


def indefinite_inner_product(x, y, sig: Signature) -> float:
    """Return ``x^T I_qs y``: first ``q`` products added, last ``s`` subtracted."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape or x.size != sig.d:
        raise InvalidArgumentError(
            f"vector lengths {x.size} and {y.size} do not match signature dimension {sig.d}"
        )
    return float(x[: sig.q] @ y[: sig.q] - x[sig.q:] @ y[sig.q:])


def latent_kernel(Lambda, sig: Signature) -> np.ndarray:
    """Row-wise indefinite inner products, ``Lambda I_qs Lambda^T``."""
    Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
    if Lambda.shape[1] != sig.d:
        raise InvalidArgumentError(
            f"latent dimension {Lambda.shape[1]} does not match signature dimension {sig.d}"
        )
    return (Lambda * sig.diagonal()) @ Lambda.T


def as_covariate_stack(X, n: int | None = None) -> np.ndarray:
    """Coerce edge covariates to a float ``(p, n, n)`` array and validate it."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] != X.shape[2]:
        raise InvalidArgumentError(f"edge covariates must have shape (p, n, n), got {X.shape}")
    if n is not None and X.shape[1] != n:
        raise InvalidArgumentError(f"edge covariates are {X.shape[1]}x{X.shape[1]}, expected {n}x{n}")
    return X


def covariate_effect(gamma, X) -> np.ndarray:
    """Return ``C = sum_l gamma_l X_l``."""
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    X = as_covariate_stack(X)
    if gamma.shape != (X.shape[0],):
        raise InvalidArgumentError(f"gamma has length {gamma.size}, but there are {X.shape[0]} covariates")
    return np.tensordot(gamma, X, axes=(0, 0))


def edge_probability_matrix(gamma, blocks: ResidualBlocks, X, clamp: bool = False) -> np.ndarray:
    """Return ``P_ij = x_ij^T gamma + Theta[z_i, z_j]``.

    The diagonal is filled by the same formula but lies outside the model,
    which only covers node pairs ``i < j``; callers must not score it.
    With ``clamp`` the result is truncated to ``[0, 1]``.
    """
    X = as_covariate_stack(X)
    n = X.shape[1]
    if blocks.assignments.shape != (n,):
        raise InvalidArgumentError(f"assignments cover {blocks.assignments.size} nodes, expected {n}")
    P = covariate_effect(gamma, X) + blocks.expanded()
    if clamp:
        P = np.clip(P, 0.0, 1.0)
    return P


@dataclass(frozen=True)
class ProbabilityReport:
    max: float
    min: float
    argmax: tuple
    argmin: tuple

    @property
    def valid(self) -> bool:
        return self.max <= 1.0 and self.min >= 0.0

    @property
    def offending(self) -> tuple | None:
        """Index pair of the worst violation, if any."""
        if self.min < 0.0 and (self.max <= 1.0 or -self.min >= self.max - 1.0):
            return self.argmin
        if self.max > 1.0:
            return self.argmax
        return None


def validate_probability_model(P) -> ProbabilityReport:
    """Check that every off-diagonal entry of ``P`` lies in ``[0, 1]``."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidArgumentError(f"P must be square, got {P.shape}")
    n = P.shape[0]
    if n < 2:
        raise InvalidArgumentError("P needs at least two nodes")
    iu, ju = np.triu_indices(n, 1)
    vals = P[iu, ju]
    hi, lo = int(np.argmax(vals)), int(np.argmin(vals))
    return ProbabilityReport(
        max=float(vals[hi]),
        min=float(vals[lo]),
        argmax=(int(iu[hi]), int(ju[hi])),
        argmin=(int(iu[lo]), int(ju[lo])),
    )
