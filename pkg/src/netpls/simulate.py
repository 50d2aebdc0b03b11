"""Generators for Type I (SBM residual) and Type II (indefinite low-rank residual) networks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeneratorInvalidError, InvalidArgumentError
from .model import ResidualBlocks, Signature, covariate_effect, validate_probability_model

TYPE1_MEANS = np.array([[0.3], [0.668]])
TYPE2_MEANS = np.sqrt(np.array([[0.6, 0.3], [0.2, 0.4]]))
TYPE2_COV_MEANS = {(0, 0): 0.3, (1, 1): 0.9, (0, 1): 0.3}
TYPE2_COV_SD = 1 / 16
TYPE2_COV_FILL = 0.4
NODE_NORMAL = (0.2, 0.25)  # mean, standard deviation
MAX_REDRAWS = 100


@dataclass
class SimulationTruth:
    """Ground truth behind a simulated network.

    ``z`` holds zero-based block labels and ``means`` the per-block latent
    positions, so ``theta == means I_qs means^T``.
    """

    gamma: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    P: np.ndarray
    X: np.ndarray
    means: np.ndarray
    signature: Signature
    meta: str
    covariate_names: tuple = ()
    node_covariates: dict | None = None
    covariate_blocks: np.ndarray | None = None

    @property
    def blocks(self) -> ResidualBlocks:
        return ResidualBlocks(self.means, self.z, self.theta, self.signature)

    @property
    def latent(self) -> np.ndarray:
        return self.means[self.z]


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def edge_covariates_from_nodes(values, kind: str = "quantitative") -> np.ndarray:
    """Turn a node covariate into an edge covariate matrix with zero diagonal.

    ``quantitative`` gives ``|x_i - x_j|``; ``categorical`` gives the
    indicator ``x_i == x_j``.
    """
    values = np.asarray(values)
    if values.ndim != 1:
        raise InvalidArgumentError("node covariate must be one-dimensional")
    if kind == "quantitative":
        v = values.astype(float)
        M = np.abs(v[:, None] - v[None, :])
    elif kind == "categorical":
        M = (values[:, None] == values[None, :]).astype(float)
    else:
        raise InvalidArgumentError(f"unknown covariate kind {kind!r}")
    np.fill_diagonal(M, 0.0)
    return M


def sample_bernoulli_graph(P, seed=None) -> np.ndarray:
    """Independent Bernoulli(P_ij) edges for ``i < j``, mirrored, zero diagonal."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidArgumentError(f"P must be square, got {P.shape}")
    n = P.shape[0]
    iu, ju = np.triu_indices(n, 1)
    p = P[iu, ju]
    if np.any(~np.isfinite(p)) or p.min(initial=0.0) < 0.0 or p.max(initial=0.0) > 1.0:
        raise InvalidArgumentError("off-diagonal probabilities must lie in [0, 1]")
    A = np.zeros((n, n))
    A[iu, ju] = _rng(seed).random(p.size) < p
    return A + A.T


def _labels(rng, n, probs):
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
        raise InvalidArgumentError("block probabilities must form a probability vector")
    return rng.choice(probs.size, size=n, p=probs)


def _expanded_truth(gamma, X, means, sig, z, meta, **extra):
    blocks = ResidualBlocks.from_means(means, z, sig)
    P = covariate_effect(gamma, X) + blocks.expanded()
    return SimulationTruth(
        gamma=np.asarray(gamma, dtype=float),
        theta=blocks.theta,
        z=z,
        P=P,
        X=X,
        means=np.asarray(means, dtype=float),
        signature=sig,
        meta=meta,
        **extra,
    )


def type1_truth(n: int, setting: str = "a", seed=None, block_probs=(0.5, 0.5)) -> SimulationTruth:
    """Draw labels and covariates for a Type I design without sampling edges.

    Settings: ``a`` one Bernoulli(0.5) node covariate, ``b`` one Normal node
    covariate, ``c`` both; node covariates become edge covariates through
    ``|x_i - x_j|``.  Covariate draws whose probabilities leave ``[0, 1]``
    are redrawn.
    """
    if n < 4:
        raise InvalidArgumentError("type I simulation needs n >= 4")
    if setting not in ("a", "b", "c"):
        raise InvalidArgumentError(f"unknown type I setting {setting!r}")
    rng = _rng(seed)
    sig = Signature(1, 0)
    z = _labels(rng, n, block_probs)
    gamma = {"a": [0.4], "b": [0.4], "c": [0.4, 0.1]}[setting]
    names = {"a": ("binary",), "b": ("continuous",), "c": ("binary", "continuous")}[setting]
    for _ in range(MAX_REDRAWS):
        nodes = {}
        if setting in ("a", "c"):
            nodes["binary"] = rng.binomial(1, 0.5, size=n).astype(float)
        if setting in ("b", "c"):
            nodes["continuous"] = rng.normal(*NODE_NORMAL, size=n)
        X = np.stack([edge_covariates_from_nodes(nodes[k]) for k in names])
        truth = _expanded_truth(
            gamma, X, TYPE1_MEANS, sig, z, f"I-{setting}",
            covariate_names=names, node_covariates=nodes,
        )
        if validate_probability_model(truth.P).valid:
            return truth
    raise GeneratorInvalidError(f"no valid covariate draw in {MAX_REDRAWS} attempts")


def simulate_type1(n: int, setting: str = "a", seed=None, block_probs=(0.5, 0.5)):
    """Type I network: rank-one SBM residual with means 0.3 and 0.668.

    Returns
    -------
    A : ndarray
        Sampled adjacency matrix.
    truth : SimulationTruth
    """
    rng = _rng(seed)
    truth = type1_truth(n, setting, rng, block_probs)
    return sample_bernoulli_graph(truth.P, rng), truth


def _type2_continuous(rng, cov_blocks, truth_check):
    """Block-structured Normal covariate, entries redrawn while ``truth_check`` fails."""
    n = cov_blocks.size
    iu, ju = np.triu_indices(n, 1)
    a, b = np.minimum(cov_blocks[iu], cov_blocks[ju]), np.maximum(cov_blocks[iu], cov_blocks[ju])
    mean = np.full(iu.size, TYPE2_COV_FILL)
    random = np.zeros(iu.size, dtype=bool)
    for (r, c), mu in TYPE2_COV_MEANS.items():
        sel = (a == r) & (b == c)
        mean[sel] = mu
        random |= sel
    vals = mean.copy()
    todo = random.copy()
    for _ in range(MAX_REDRAWS):
        vals[todo] = rng.normal(mean[todo], TYPE2_COV_SD)
        todo = random & ~truth_check(iu, ju, vals)
        if not todo.any():
            break
    else:
        raise GeneratorInvalidError(f"covariate entries still invalid after {MAX_REDRAWS} redraws")
    M = np.zeros((n, n))
    M[iu, ju] = vals
    return M + M.T


def simulate_type2(n: int, setting: str = "b", seed=None, block_probs=(1 / 3, 2 / 3),
                   layout: str = "independent", cov_block_probs=(1 / 3, 1 / 3, 1 / 3), split=0.5):
    """Type II network: residual kernel ``[[0.3, 0], [0, -0.2]]`` with signature (1, 1).

    With ``layout="independent"`` every node falls in covariate block 1, 2
    or 3 with ``cov_block_probs``, independently of its residual block.
    With ``layout="nested"`` nodes of residual block 1 form covariate block
    1 and nodes of residual block 2 fall in covariate block 2 or 3, the
    latter with probability ``split``.  The continuous edge covariate is Normal with sd 1/16 and
    means 0.3, 0.9, 0.3 over covariate block pairs (1,1), (2,2), (1,2) and
    equals 0.4 on pairs touching block 3.  Setting ``c`` adds a binary
    covariate that is Bernoulli(0.5) on pairs touching block 3 and 0
    elsewhere.

    Returns
    -------
    A : ndarray
    truth : SimulationTruth
    """
    if setting == "a":
        raise InvalidArgumentError(
            "type II residuals cannot arise with a single binary covariate: "
            "pairs with x_ij = 0 force 0 <= Theta <= 1"
        )
    if setting not in ("b", "c"):
        raise InvalidArgumentError(f"unknown type II setting {setting!r}")
    if n < 6:
        raise InvalidArgumentError("type II simulation needs n >= 6")
    if layout not in ("independent", "nested"):
        raise InvalidArgumentError(f"unknown covariate layout {layout!r}")
    rng = _rng(seed)
    sig = Signature(1, 1)
    z = _labels(rng, n, block_probs)
    if layout == "independent":
        if np.size(cov_block_probs) != 3:
            raise InvalidArgumentError("cov_block_probs needs three entries")
        cov_blocks = _labels(rng, n, cov_block_probs)
    else:
        cov_blocks = np.where(z == 0, 0, np.where(rng.random(n) < split, 2, 1))
    theta = ResidualBlocks.from_means(TYPE2_MEANS, z, sig).theta

    iu_all, ju_all = np.triu_indices(n, 1)
    X1 = None
    if setting == "c":
        touch3 = (cov_blocks[iu_all] == 2) | (cov_blocks[ju_all] == 2)
        v = np.where(touch3, rng.binomial(1, 0.5, size=iu_all.size), 0).astype(float)
        X1 = np.zeros((n, n))
        X1[iu_all, ju_all] = v
        X1 = X1 + X1.T
    gamma = np.array([0.7]) if setting == "b" else np.array([0.3, 0.7])
    g_cont = gamma[-1]
    base = theta[z[iu_all], z[ju_all]]
    if X1 is not None:
        base = base + gamma[0] * X1[iu_all, ju_all]

    def ok(iu, ju, vals):
        P = base + g_cont * vals
        return (P >= 0.0) & (P <= 1.0)

    X2 = _type2_continuous(rng, cov_blocks, ok)
    X = np.stack([X2]) if X1 is None else np.stack([X1, X2])
    names = ("continuous",) if X1 is None else ("binary", "continuous")
    truth = _expanded_truth(
        gamma, X, TYPE2_MEANS, sig, z, f"II-{setting}",
        covariate_names=names, covariate_blocks=cov_blocks,
    )
    if not validate_probability_model(truth.P).valid:
        raise GeneratorInvalidError("generated probabilities leave [0, 1]")
    return sample_bernoulli_graph(truth.P, rng), truth
