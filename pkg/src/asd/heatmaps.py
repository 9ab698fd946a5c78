"""Spatial views of the assignment matrix: PGM export and mask scoring.

The assignment matrix has one row per location in the flattening order, so
rearranging it back to (H, W, factors) is the exact inverse of the flatten
step; per-location channel sums stay 1. Localization quality is measured
as IoU between a quantile-binarized heatmap and the ground-truth mask
pooled down to heatmap resolution by block max.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Tensor

PGM_UPSCALE = 8


def rearrange_assignment(assignment, height: int, width: int) -> np.ndarray:
    """(M, F) assignment -> (H, W, F) heatmap stack; M must equal H*W."""
    a = assignment.data if isinstance(assignment, Tensor) else np.asarray(assignment)
    if a.ndim != 2:
        raise ShapeError(f"assignment must be 2-d, got {a.shape}")
    if a.shape[0] != height * width:
        raise ShapeError(f"assignment has {a.shape[0]} rows, expected {height}x{width}={height * width}")
    return a.reshape(height, width, a.shape[1])


def flatten_heatmaps(stack: np.ndarray) -> np.ndarray:
    """Inverse of rearrange_assignment."""
    h, w, f = stack.shape
    return stack.reshape(h * w, f)


def write_heatmap_pgm(heatmap: np.ndarray, path, upscale: int = PGM_UPSCALE) -> None:
    """Binary PGM (P5, maxval 255), min-max scaled, nearest-upscaled.

    Pixels use round-half-up quantization; a constant map writes all zeros.
    """
    arr = np.asarray(heatmap, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"heatmap must be 2-d, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("heatmap contains non-finite values")
    lo, hi = arr.min(), arr.max()
    if hi > lo:
        pixels = np.floor((arr - lo) / (hi - lo) * 255.0 + 0.5).astype(np.uint8)
    else:
        pixels = np.zeros_like(arr, dtype=np.uint8)
    if upscale > 1:
        pixels = np.repeat(np.repeat(pixels, upscale, axis=0), upscale, axis=1)
    header = f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + pixels.tobytes(order="C"))


def downsample_mask(mask: np.ndarray, height: int, width: int) -> np.ndarray:
    """Block-max pooling of a full-resolution binary mask to (height, width)."""
    s_h, s_w = mask.shape
    if s_h % height or s_w % width:
        raise ShapeError(f"mask {mask.shape} not divisible into {height}x{width} blocks")
    fh, fw = s_h // height, s_w // width
    return mask.reshape(height, fh, width, fw).max(axis=(1, 3))


def localization_score(heatmaps: np.ndarray, masks: np.ndarray, labels: np.ndarray,
                       q: float = 0.8) -> np.ndarray:
    """Per-attribute IoU of quantile-binarized heatmaps against masks.

    Heatmap j keeps locations strictly above its q-quantile (the top 1-q
    fraction). Attributes absent from the sample score NaN and are skipped
    by callers when averaging.
    """
    if not 0 < q < 1:
        raise ValueError(f"q must be in (0, 1), got {q}")
    h, w, _ = heatmaps.shape
    d = masks.shape[0]
    scores = np.full(d, np.nan)
    for j in range(d):
        if labels[j] == 0:
            continue
        coarse = downsample_mask(masks[j], h, w) > 0
        hot = heatmaps[:, :, j]
        selected = hot > np.quantile(hot, q)
        union = (selected | coarse).sum()
        if union == 0:
            continue
        scores[j] = (selected & coarse).sum() / union
    return scores
