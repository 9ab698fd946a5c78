"""Deterministic synthetic images with localized binary attributes.

Each attribute k owns a fixed anchor point on a grid and a distinct glyph
shape. A sample renders each present glyph at its anchor plus Gaussian
positional jitter, records the rendered pixels as a ground-truth mask, then
adds pixel noise and clamps to [0, 1]. Jitter makes neighboring glyph
supports overlap across the dataset, so a given pixel can belong to
different attributes in different samples; masks exist purely for
evaluation and never reach the training loss.

All glyphs are mirror-symmetric, so horizontally flipping an image cannot
turn one attribute's glyph into another's; flip augmentation is therefore
label-preserving by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .asdt import read_container, write_container
from .errors import ConfigError

GLYPH_NAMES = ("disc", "ring", "hbar", "vbar", "plus", "cross")


@dataclass
class GeneratorConfig:
    image_size: int = 32
    num_attributes: int = 6
    glyph_radius: float = 3.5
    jitter: float = 2.0
    presence_prob: float = 0.5
    noise_std: float = 0.05
    channels: int = 1

    def __post_init__(self):
        if self.image_size < 8:
            raise ConfigError(f"image_size must be >= 8, got {self.image_size}")
        if self.num_attributes < 1:
            raise ConfigError(f"num_attributes must be >= 1, got {self.num_attributes}")
        if not 0.0 <= self.presence_prob <= 1.0:
            raise ConfigError(f"presence_prob must be in [0, 1], got {self.presence_prob}")
        if self.jitter >= self.image_size / 4:
            raise ConfigError(f"jitter {self.jitter} too large for image_size {self.image_size}")
        if not 0 < self.glyph_radius < self.image_size / 2:
            raise ConfigError(f"glyph_radius {self.glyph_radius} out of range")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")


@dataclass
class SyntheticSample:
    image: np.ndarray   # (S, S, channels), values in [0, 1]
    labels: np.ndarray  # (D,), 0/1
    masks: np.ndarray   # (D, S, S), 0/1; all-zero row when the attribute is absent


def anchors(config: GeneratorConfig) -> np.ndarray:
    """Fixed (y, x) anchor per attribute, laid out on a centered grid."""
    d = config.num_attributes
    cols = int(np.ceil(np.sqrt(d)))
    rows = int(np.ceil(d / cols))
    pts = []
    for k in range(d):
        r, c = divmod(k, cols)
        y = (r + 0.5) / rows * config.image_size
        x = (c + 0.5) / cols * config.image_size
        pts.append((y, x))
    return np.array(pts)


def glyph_stencil(kind: int, center: tuple[float, float], radius: float, size: int) -> np.ndarray:
    """Boolean pixel support of glyph ``kind`` at a (possibly fractional) center."""
    cy, cx = center
    yy, xx = np.mgrid[0:size, 0:size]
    dy = yy - cy
    dx = xx - cx
    dist = np.sqrt(dy * dy + dx * dx)
    thick = max(radius / 3.0, 0.8)
    name = GLYPH_NAMES[kind % len(GLYPH_NAMES)]
    if name == "disc":
        return dist <= radius
    if name == "ring":
        return (dist <= radius) & (dist >= radius / 2.0)
    if name == "hbar":
        return (np.abs(dy) <= thick) & (np.abs(dx) <= radius)
    if name == "vbar":
        return (np.abs(dx) <= thick) & (np.abs(dy) <= radius)
    if name == "plus":
        h = (np.abs(dy) <= thick) & (np.abs(dx) <= radius)
        v = (np.abs(dx) <= thick) & (np.abs(dy) <= radius)
        return h | v
    # cross: both diagonals, mirror-symmetric like the rest
    box = np.maximum(np.abs(dy), np.abs(dx)) <= radius
    return box & ((np.abs(dy - dx) <= thick) | (np.abs(dy + dx) <= thick))


def generate(seed: int, index: int, config: GeneratorConfig) -> SyntheticSample:
    """Render sample ``index`` of the stream ``seed``; bitwise reproducible."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
    d = config.num_attributes
    size = config.image_size
    present = rng.random(d) < config.presence_prob
    offsets = rng.normal(0.0, config.jitter, (d, 2))
    canvas = np.zeros((size, size))
    masks = np.zeros((d, size, size))
    pts = anchors(config)
    lo = config.glyph_radius
    hi = size - 1 - config.glyph_radius
    for k in range(d):
        if not present[k]:
            continue
        # keep the jittered center in-image so present attributes always
        # render at least one pixel (labels[k] == 1 iff mask non-empty)
        cy = float(np.clip(pts[k, 0] + offsets[k, 0], lo, hi))
        cx = float(np.clip(pts[k, 1] + offsets[k, 1], lo, hi))
        stencil = glyph_stencil(k, (cy, cx), config.glyph_radius, size)
        canvas = np.maximum(canvas, stencil.astype(np.float64))
        masks[k] = stencil
    noise = rng.normal(0.0, config.noise_std, (size, size, config.channels))
    image = np.clip(canvas[:, :, None] + noise, 0.0, 1.0)
    return SyntheticSample(image=image, labels=present.astype(np.float64), masks=masks)


def make_split(seed: int, n: int, config: GeneratorConfig) -> list[SyntheticSample]:
    """Samples 0..n-1 of stream ``seed``. Train/val/test use seed, seed+1, seed+2."""
    if n < 1:
        raise ValueError(f"split size must be >= 1, got {n}")
    return [generate(seed, i, config) for i in range(n)]


def flip_horizontal(sample: SyntheticSample) -> SyntheticSample:
    """Mirror image and masks left-right; labels are unchanged by construction."""
    return SyntheticSample(
        image=np.ascontiguousarray(sample.image[:, ::-1, :]),
        labels=sample.labels.copy(),
        masks=np.ascontiguousarray(sample.masks[:, :, ::-1]),
    )


def save_shard(samples: list[SyntheticSample], path) -> None:
    write_container(
        {
            "images": np.stack([s.image for s in samples]),
            "labels": np.stack([s.labels for s in samples]),
            "masks": np.stack([s.masks for s in samples]),
        },
        path,
    )


def load_shard(path) -> list[SyntheticSample]:
    entries = read_container(path)
    for key in ("images", "labels", "masks"):
        if key not in entries:
            raise ConfigError(f"shard is missing the {key!r} entry")
    images, labels, masks = entries["images"], entries["labels"], entries["masks"]
    return [
        SyntheticSample(image=images[i], labels=labels[i], masks=masks[i])
        for i in range(images.shape[0])
    ]
