"""Feature extractor shape contracts, identity case, and gradients."""

import numpy as np
import pytest

from asd.errors import ConfigError
from asd.extractor import ExtractorConfig, ExtractorParams, conv2d_same, extract, init_extractor
from asd.tensor import Tensor, backward, finite_diff_check, relu, sum_all


@pytest.fixture
def rng():
    return np.random.default_rng(11)


def test_shape_contract(rng):
    config = ExtractorConfig(in_channels=1, stage_channels=[8, 5], pool_factor=2)
    params = init_extractor(config, seed=0)
    out = extract(Tensor(rng.random((32, 32, 1))), params, config)
    assert out.shape == (8, 8, 5)


def test_identity_kernel_single_stage(rng):
    config = ExtractorConfig(in_channels=1, stage_channels=[1], kernel_size=1, pool_factor=1)
    params = init_extractor(config, seed=0)
    params.kernels[0].data[:] = 1.0  # 1x1x1x1 identity kernel
    image = rng.random((6, 6, 1))  # non-negative, so ReLU is the identity
    out = extract(Tensor(image), params, config)
    assert np.array_equal(out.data, image)


def test_indivisible_dims_name_required_divisor(rng):
    config = ExtractorConfig(in_channels=1, stage_channels=[4, 4], pool_factor=2)
    params = init_extractor(config, seed=0)
    with pytest.raises(ConfigError, match="divisible by cumulative pool factor 4"):
        extract(Tensor(rng.random((30, 32, 1))), params, config)


def test_even_kernel_rejected():
    with pytest.raises(ConfigError, match="odd"):
        ExtractorConfig(kernel_size=4)


class TestInit:
    def test_deterministic_per_seed(self):
        config = ExtractorConfig(in_channels=2, stage_channels=[3, 4])
        a = init_extractor(config, seed=42)
        b = init_extractor(config, seed=42)
        for ta, tb in zip(a.tensors(), b.tensors()):
            assert np.array_equal(ta.data, tb.data)

    def test_seeds_differ(self):
        config = ExtractorConfig(in_channels=2, stage_channels=[3])
        a = init_extractor(config, seed=1)
        b = init_extractor(config, seed=2)
        assert not np.array_equal(a.kernels[0].data, b.kernels[0].data)

    def test_fan_based_bound_and_zero_biases(self):
        config = ExtractorConfig(in_channels=3, stage_channels=[5], kernel_size=3)
        params = init_extractor(config, seed=9)
        bound = np.sqrt(6.0 / (9 * 3 + 9 * 5))
        assert np.abs(params.kernels[0].data).max() < bound
        assert np.array_equal(params.biases[0].data, np.zeros(5))


def test_translation_covariance_before_pooling(rng):
    kernel = Tensor(rng.standard_normal((3, 3, 1, 2)))
    bias = Tensor(np.zeros(2))
    x = rng.random((10, 10, 1))
    shifted = np.zeros_like(x)
    shifted[1:] = x[:-1]  # shift one pixel down, zero-fill the top row
    out = relu(conv2d_same(Tensor(x), kernel, bias)).data
    out_shifted = relu(conv2d_same(Tensor(shifted), kernel, bias)).data
    assert np.abs(out_shifted[2:-1] - out[1:-2]).max() <= 1e-13


def test_gradient_through_extract(rng):
    config = ExtractorConfig(in_channels=1, stage_channels=[2, 3], pool_factor=2)
    params = init_extractor(config, seed=3)
    image = Tensor(rng.random((8, 8, 1)))
    weights = Tensor(rng.standard_normal((2, 2, 3)))  # fixed mixing so the loss is non-trivial

    def through_image(t):
        return sum_all((extract(t, params, config) * weights))

    assert finite_diff_check(through_image, image) <= 1e-4

    for target in (params.kernels[0], params.kernels[1], params.biases[1]):
        def through_param(t, target=target):
            kernels = [t if k is target else Tensor(k.data) for k in params.kernels]
            biases = [t if b is target else Tensor(b.data) for b in params.biases]
            probe = ExtractorParams(kernels, biases)
            return sum_all(extract(image, probe, config) * weights)

        assert finite_diff_check(through_param, Tensor(target.data.copy())) <= 1e-4


def test_gradient_reaches_every_kernel(rng):
    config = ExtractorConfig(in_channels=1, stage_channels=[3, 4, 5], pool_factor=2)
    params = init_extractor(config, seed=5)
    out = extract(Tensor(rng.random((16, 16, 1))), params, config)
    backward(sum_all(out * Tensor(rng.standard_normal(out.shape))))
    for kernel in params.kernels:
        assert kernel.grad is not None and np.abs(kernel.grad).max() > 0
    for bias in params.biases:
        assert bias.grad is not None and np.abs(bias.grad).max() > 0
