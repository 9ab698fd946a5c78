"""Pairwise cosine correlations among latent factors and their penalty.

Highly correlated factors blur the per-location competition in the
assignment step, so training adds the sum of squared off-diagonal cosines
as a penalty. The diagonal is excluded: the cosine of a row with itself is
identically 1 and contributes neither value nor gradient.
"""

from __future__ import annotations

import numpy as np

from .decomposition import COSINE_EPS
from .tensor import Tensor, matmul, mul, row_l2_normalize, square, sum_all, transpose


def correlation_matrix(factors: Tensor) -> Tensor:
    """Symmetric matrix of cosine similarities between factor rows."""
    n = row_l2_normalize(factors, COSINE_EPS)
    return matmul(n, transpose(n))


def correlation_loss(factors: Tensor) -> Tensor:
    """Sum of squared off-diagonal cosines; zero iff the rows are pairwise orthogonal."""
    h = correlation_matrix(factors)
    rows = factors.shape[0]
    off_diag = Tensor(1.0 - np.eye(rows))
    return sum_all(mul(square(h), off_diag))


def mean_abs_off_diagonal(factors_data: np.ndarray) -> float:
    """Plain-numpy diagnostic used by training history; no gradients."""
    norms = np.linalg.norm(factors_data, axis=1)
    n = factors_data / np.maximum(norms, COSINE_EPS)[:, None]
    h = n @ n.T
    rows = h.shape[0]
    mask = ~np.eye(rows, dtype=bool)
    return float(np.abs(h[mask]).mean())
