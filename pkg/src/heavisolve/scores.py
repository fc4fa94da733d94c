"""Margin score functions shared by the treatment and classification builders.

With per-class weight vectors stacked into one decision vector
beta = (beta^0, ..., beta^{J-1}) of length J*p, the margin score of class j
at a feature vector xi is

    h_j(xi, beta) = xi . beta^j + b_j - max_{m != j} (xi . beta^m + b_m) - tau_j,

a concave min-of-affine function of beta with J-1 pieces.  For tau_j > 0 at
most one class can score nonnegative, which makes the induced assignment rule
single-valued.
"""
from __future__ import annotations

import numpy as np

from .pwa import AffineFn, MinAffine

__all__ = ["margin_score", "score_matrix", "margin_values"]


def margin_score(xi: np.ndarray, j: int, n_classes: int,
                 base_scores: np.ndarray, tau: float) -> MinAffine:
    """The class-j margin score as a MinAffine in the stacked beta variable."""
    xi = np.asarray(xi, dtype=float)
    p = xi.shape[0]
    pieces = []
    for m in range(n_classes):
        if m == j:
            continue
        w = np.zeros(n_classes * p)
        w[j * p:(j + 1) * p] = xi
        w[m * p:(m + 1) * p] = -xi
        pieces.append(AffineFn(w, float(base_scores[j] - base_scores[m] - tau)))
    return MinAffine(tuple(pieces))


def score_matrix(features: np.ndarray, beta: np.ndarray,
                 base_scores: np.ndarray) -> np.ndarray:
    """Raw class scores xi . beta^j + b_j for each row of features."""
    return features @ beta.T + base_scores[None, :]


def margin_values(features: np.ndarray, beta: np.ndarray,
                  base_scores: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """h_j(xi, beta) for every (row, class) pair, vectorized.

    Uses the top-two trick: for the argmax class the competitor is the second
    largest score, for every other class it is the largest.
    """
    f = score_matrix(features, beta, base_scores)
    order = np.argsort(f, axis=1)
    top = order[:, -1]
    rows = np.arange(f.shape[0])
    best = f[rows, top]
    second = f[rows, order[:, -2]] if f.shape[1] > 1 else np.full(f.shape[0], -np.inf)
    rivals = np.where(np.arange(f.shape[1])[None, :] == top[:, None],
                      second[:, None], best[:, None])
    return f - rivals - np.asarray(tau, dtype=float)[None, :]
