"""Small trainable CNN mapping an image to a spatial feature map.

Each stage is a same-padded convolution, ReLU, then average pooling, so an
(h0, w0, in_channels) image becomes an (h0/P, w0/P, C) feature map where P
is the cumulative pool factor and C the last stage's channel count.
Convolution and pooling register composite nodes on the tape via
``op_result`` and are covered by the finite-difference checker like every
primitive op.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import Tensor, op_result, relu


@dataclass
class ExtractorConfig:
    in_channels: int = 1
    stage_channels: list[int] = field(default_factory=lambda: [8, 32])
    kernel_size: int = 3
    pool_factor: int = 2

    def __post_init__(self):
        if self.kernel_size % 2 != 1 or self.kernel_size < 1:
            raise ConfigError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.pool_factor < 1:
            raise ConfigError(f"pool_factor must be >= 1, got {self.pool_factor}")
        if not self.stage_channels:
            raise ConfigError("stage_channels must name at least one stage")

    @property
    def out_channels(self) -> int:
        return self.stage_channels[-1]

    @property
    def cumulative_pool(self) -> int:
        return self.pool_factor ** len(self.stage_channels)


@dataclass
class ExtractorParams:
    kernels: list[Tensor]
    biases: list[Tensor]

    def named(self):
        for i, (k, b) in enumerate(zip(self.kernels, self.biases)):
            yield f"stage{i}.kernel", k
            yield f"stage{i}.bias", b

    def tensors(self) -> list[Tensor]:
        return self.kernels + self.biases


def init_extractor(config: ExtractorConfig, seed: int) -> ExtractorParams:
    """Glorot-uniform kernels (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    k = config.kernel_size
    kernels, biases = [], []
    c_in = config.in_channels
    for c_out in config.stage_channels:
        fan_in = k * k * c_in
        fan_out = k * k * c_out
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        kernels.append(Tensor(rng.uniform(-bound, bound, (k, k, c_in, c_out)), requires_grad=True))
        biases.append(Tensor(np.zeros(c_out), requires_grad=True))
        c_in = c_out
    return ExtractorParams(kernels, biases)


def conv2d_same(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Stride-1 same-padded convolution of an (H, W, Cin) map, plus bias."""
    if x.data.ndim != 3 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d_same needs (H,W,Cin) and (k,k,Cin,Cout), got {x.shape}, {kernel.shape}")
    h, w, c_in = x.shape
    k, k2, kc_in, c_out = kernel.shape
    if k != k2 or kc_in != c_in:
        raise ShapeError(f"kernel {kernel.shape} does not match input {x.shape}")
    pad = k // 2
    padded = np.pad(x.data, ((pad, pad), (pad, pad), (0, 0)))
    patches = np.empty((h, w, k, k, c_in))
    for di in range(k):
        for dj in range(k):
            patches[:, :, di, dj, :] = padded[di:di + h, dj:dj + w, :]
    cols = patches.reshape(h * w, k * k * c_in)
    kmat = kernel.data.reshape(k * k * c_in, c_out)
    out = (cols @ kmat + bias.data).reshape(h, w, c_out)

    def backward(g):
        gmat = g.reshape(h * w, c_out)
        d_bias = gmat.sum(axis=0)
        d_kernel = (cols.T @ gmat).reshape(kernel.shape)
        d_patches = (gmat @ kmat.T).reshape(h, w, k, k, c_in)
        d_padded = np.zeros_like(padded)
        for di in range(k):
            for dj in range(k):
                d_padded[di:di + h, dj:dj + w, :] += d_patches[:, :, di, dj, :]
        d_x = d_padded[pad:pad + h, pad:pad + w, :]
        return d_x, d_kernel, d_bias

    return op_result(out, "conv2d_same", (x, kernel, bias), backward)


def avg_pool2d(x: Tensor, factor: int) -> Tensor:
    if x.data.ndim != 3:
        raise ShapeError(f"avg_pool2d needs an (H,W,C) operand, got {x.shape}")
    h, w, c = x.shape
    p = int(factor)
    if h % p or w % p:
        raise ConfigError(f"spatial dims {h}x{w} not divisible by pool factor {p}")
    out = x.data.reshape(h // p, p, w // p, p, c).mean(axis=(1, 3))

    def backward(g):
        return (np.repeat(np.repeat(g, p, axis=0), p, axis=1) / (p * p),)

    return op_result(out, "avg_pool2d", (x,), backward)


def extract(image: Tensor, params: ExtractorParams, config: ExtractorConfig) -> Tensor:
    """Run the conv/ReLU/pool stages; returns the (H, W, C) feature map."""
    if image.data.ndim != 3:
        raise ShapeError(f"extract needs an (h,w,channels) image, got {image.shape}")
    h0, w0, c0 = image.shape
    if c0 != config.in_channels:
        raise ConfigError(f"image has {c0} channels, extractor expects {config.in_channels}")
    total = config.cumulative_pool
    if h0 % total or w0 % total:
        raise ConfigError(f"image dims {h0}x{w0} must be divisible by cumulative pool factor {total}")
    x = image
    for kernel, bias in zip(params.kernels, params.biases):
        x = relu(conv2d_same(x, kernel, bias))
        if config.pool_factor > 1:
            x = avg_pool2d(x, config.pool_factor)
    return x
