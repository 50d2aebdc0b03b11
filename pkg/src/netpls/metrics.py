"""Partition agreement scores and coefficient mean squared error."""
from __future__ import annotations

import numpy as np
from scipy.special import comb

from .errors import InvalidArgumentError


def _contingency(a, b) -> np.ndarray:
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise InvalidArgumentError(f"partitions have different lengths {a.size} and {b.size}")
    if a.size == 0:
        raise InvalidArgumentError("partitions are empty")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia, ib), 1)
    return table


def adjusted_rand_index(a, b) -> float:
    """Adjusted Rand index under the permutation (hypergeometric) model.

    Two single-class partitions, or any pair with no room for chance
    agreement to vary, score 1.
    """
    table = _contingency(a, b)
    n = table.sum()
    sum_cells = comb(table, 2).sum()
    sum_rows = comb(table.sum(axis=1), 2).sum()
    sum_cols = comb(table.sum(axis=0), 2).sum()
    expected = sum_rows * sum_cols / comb(n, 2) if n > 1 else 0.0
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def _entropy(counts) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def normalized_mutual_information(a, b, average: str = "geometric") -> float:
    """Mutual information over ``sqrt(H(a) H(b))`` (or the arithmetic mean).

    A partition with a single class has zero entropy; the score is then 0,
    or 1 when both partitions are single-class.
    """
    table = _contingency(a, b)
    n = table.sum()
    ha, hb = _entropy(table.sum(axis=1)), _entropy(table.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[nz] / n**2
    mi = float(np.sum(pij * np.log(pij / outer)))
    if average == "geometric":
        norm = np.sqrt(ha * hb)
    elif average == "arithmetic":
        norm = 0.5 * (ha + hb)
    else:
        raise InvalidArgumentError(f"unknown normalization {average!r}")
    return float(min(max(mi / norm, 0.0), 1.0))


def mse(estimates, truth) -> np.ndarray:
    """Per-coordinate mean squared error of a list of estimate vectors."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    if est.size == 0:
        raise InvalidArgumentError("need at least one estimate")
    if est.shape[1] != truth.size:
        raise InvalidArgumentError(f"estimates have length {est.shape[1]}, truth has {truth.size}")
    return np.mean((est - truth) ** 2, axis=0)
