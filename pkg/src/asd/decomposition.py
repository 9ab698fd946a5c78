"""Assignment and embedding over latent factors.

The feature map is flattened to M = H*W location rows. Each location gets a
softmax distribution over the latent factors (D attribute factors plus an
optional noise factor), built from cosine similarities; the assignment
matrix is therefore row-stochastic. Per-factor embeddings then aggregate
all locations weighted by their assigned magnitudes, plus the per-channel
mean of the feature map, so

    g = A^T f_flat + mean_feature   (broadcast to every factor row).

Both steps are differentiable with respect to the feature map and the
factors.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import (
    Tensor,
    add,
    matmul,
    mean_rows,
    reshape,
    row_l2_normalize,
    softmax_rows,
    transpose,
)

COSINE_EPS = 1e-12


def init_latent_factors(num_attributes: int, channels: int, seed: int,
                        include_noise: bool = True) -> Tensor:
    """Standard-normal factor rows, one per attribute plus the noise row.

    Rows with near-zero norm are redrawn so cosine similarities are always
    well defined. Deterministic for a fixed seed.
    """
    if num_attributes < 1 or channels < 1:
        raise ValueError(f"need num_attributes >= 1 and channels >= 1, got {num_attributes}, {channels}")
    rows = num_attributes + (1 if include_noise else 0)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    z = rng.standard_normal((rows, channels))
    for i in range(rows):
        while np.linalg.norm(z[i]) < 1e-8:
            z[i] = rng.standard_normal(channels)
    return Tensor(z, requires_grad=True)


def flatten_feature(feature_map: Tensor) -> Tensor:
    """(H, W, C) -> (M, C) with row i = feature_map[i // W][i % W]."""
    if feature_map.data.ndim != 3:
        raise ShapeError(f"flatten_feature needs an (H,W,C) map, got {feature_map.shape}")
    h, w, c = feature_map.shape
    return reshape(feature_map, (h * w, c))


def assign(f_flat: Tensor, factors: Tensor) -> Tensor:
    """Row-stochastic assignment of locations to factors.

    Entry (i, j) is softmax over j of cosine(f_flat[i], factors[j]); the
    softmax runs within each location row, so factors compete per location.
    """
    if f_flat.data.ndim != 2 or factors.data.ndim != 2:
        raise ShapeError(f"assign needs 2-d operands, got {f_flat.shape} and {factors.shape}")
    if f_flat.shape[1] != factors.shape[1]:
        raise ShapeError(f"channel mismatch: features {f_flat.shape} vs factors {factors.shape}")
    f_norm = row_l2_normalize(f_flat, COSINE_EPS)
    z_norm = row_l2_normalize(factors, COSINE_EPS)
    similarities = matmul(f_norm, transpose(z_norm))
    return softmax_rows(similarities)


def embed(assignment: Tensor, f_flat: Tensor, include_mean: bool = True) -> Tensor:
    """Aggregate locations into one embedding per factor.

    Row j is sum_i assignment[i, j] * f_flat[i], plus the per-channel mean
    of f_flat when ``include_mean`` is set.
    """
    if assignment.shape[0] != f_flat.shape[0]:
        raise ShapeError(f"location mismatch: assignment {assignment.shape} vs features {f_flat.shape}")
    pooled = matmul(transpose(assignment), f_flat)
    if not include_mean:
        return pooled
    return add(pooled, mean_rows(f_flat))


def decompose(feature_map: Tensor, factors: Tensor,
              include_mean: bool = True) -> tuple[Tensor, Tensor]:
    """Flatten, assign, embed. Returns (embeddings, assignment).

    The assignment matrix is the one actually used to build the embeddings,
    so exported heatmaps always match the training-time values.
    """
    f_flat = flatten_feature(feature_map)
    assignment = assign(f_flat, factors)
    embeddings = embed(assignment, f_flat, include_mean=include_mean)
    return embeddings, assignment
