"""Small rank/correlation helpers shared by the scores and the harness."""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateRanking


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the average of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0], dtype=np.float64)
    i = 0
    n = values.shape[0]
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    denom_sq = float(xc @ xc) * float(yc @ yc)
    if denom_sq == 0.0:
        raise DegenerateRanking("constant sequence; correlation undefined")
    # sqrt of the product (not product of sqrts) keeps x == y exactly at 1
    return float(xc @ yc) / math.sqrt(denom_sq)


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Spearman rank correlation with average-rank tie handling."""
    return pearson(average_ranks(x), average_ranks(y))
