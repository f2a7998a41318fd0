import math

import numpy as np
import pytest

from darksight.errors import NumericalError, ShapeError, ValidationError
from darksight.tensor import (ConvSpec, NormParams, activate, conv2d, grad_check,
                              init_conv, normalize_layer, pool2d, upsample_bilinear)

from oracles import naive_conv2d, naive_pool2d


def test_conv_counting_case(backend):
    x = np.ones((1, 3, 3), np.float32)
    spec = ConvSpec(np.ones((1, 1, 3, 3), np.float32), np.zeros(1, np.float32), 1, 1)
    out = conv2d(x, spec, backend=backend)
    assert out.shape == (1, 3, 3)
    assert out[0, 1, 1] == 9
    assert out[0, 0, 0] == 4


def test_conv_zero_weights(backend, rng):
    x = rng.normal(size=(2, 5, 5)).astype(np.float32)
    spec = ConvSpec(np.zeros((3, 2, 3, 3), np.float32), np.zeros(3, np.float32), 1, 1)
    assert not conv2d(x, spec, backend=backend).any()


@pytest.mark.parametrize("stride,pad,k", [(1, 1, 3), (2, 1, 3), (1, 0, 3), (1, 0, 1), (2, 0, 2)])
def test_conv_matches_naive_loops(backend, rng, stride, pad, k):
    for _ in range(10):
        H, W = rng.integers(k, 9, size=2)
        x = rng.normal(size=(2, H, W))
        w = rng.normal(size=(3, 2, k, k))
        b = rng.normal(size=3)
        got = conv2d(x, ConvSpec(w, b, stride, pad), backend=backend)
        ref = np.array(naive_conv2d(x.tolist(), w.tolist(), b.tolist(), stride, pad))
        assert got.dtype == np.float64
        np.testing.assert_allclose(got, ref, atol=1e-6)


def test_conv_output_extent_formula(backend):
    x = np.zeros((1, 7, 6), np.float32)
    spec = ConvSpec(np.zeros((1, 1, 3, 3), np.float32), np.zeros(1, np.float32), 2, 1)
    # floor((7 + 2 - 3) / 2) + 1 = 4, floor((6 + 2 - 3) / 2) + 1 = 3
    assert conv2d(x, spec, backend=backend).shape == (1, 4, 3)


def test_conv_channel_mismatch_names_axis():
    spec = ConvSpec(np.zeros((1, 2, 3, 3)), np.zeros(1), 1, 1)
    with pytest.raises(ShapeError) as err:
        conv2d(np.zeros((3, 4, 4)), spec)
    assert err.value.axis == "channels"


def test_conv_spatial_too_small_names_axis():
    spec = ConvSpec(np.zeros((1, 1, 5, 5)), np.zeros(1), 1, 0)
    with pytest.raises(ShapeError) as err:
        conv2d(np.zeros((1, 3, 8)), spec)
    assert err.value.axis == "height"


def test_convspec_invariants():
    with pytest.raises(ShapeError):
        ConvSpec(np.zeros((2, 1, 3, 3)), np.zeros(3))
    spec = ConvSpec(np.zeros((4, 2, 3, 3)), np.zeros(4), 1, 1)
    assert (spec.out_channels, spec.in_channels, spec.kernel_size) == (4, 2, 3)


def test_conv_float32_forward_is_deterministic(backend, rng):
    x = rng.normal(size=(4, 8, 8)).astype(np.float32)
    spec = init_conv(np.random.default_rng(3), 4, 5, 3)
    a = conv2d(x, spec, backend=backend)
    b = conv2d(x.copy(), spec, backend=backend)
    assert a.dtype == np.float32
    assert a.tobytes() == b.tobytes()


def test_backends_agree(rng):
    from darksight import kernels

    if len(kernels.available_backends()) < 2:
        pytest.skip("compiled extension not built")
    x = rng.normal(size=(3, 8, 8))
    spec = ConvSpec(rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4), 1, 1)
    np.testing.assert_allclose(conv2d(x, spec, backend="cython"),
                               conv2d(x, spec, backend="python"), atol=1e-12)


@pytest.mark.parametrize("kind", ["avg", "max"])
def test_pool_constant(backend, kind):
    x = np.full((2, 6, 6), 3.5, np.float32)
    np.testing.assert_array_equal(pool2d(x, kind, 2, backend=backend), np.full((2, 3, 3), 3.5))


def test_pool_max_block(backend):
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    assert pool2d(x, "max", 2, backend=backend)[0, 0, 0] == 4
    assert pool2d(x, "avg", 2, backend=backend)[0, 0, 0] == 2.5


@pytest.mark.parametrize("kind", ["avg", "max"])
@pytest.mark.parametrize("window,stride", [(2, 2), (3, 1), (3, 2)])
def test_pool_matches_naive_loops(backend, rng, kind, window, stride):
    for _ in range(10):
        x = rng.normal(size=(2, 8, 8))
        got = pool2d(x, kind, window, stride, backend=backend)
        ref = np.array(naive_pool2d(x.tolist(), kind, window, stride))
        np.testing.assert_allclose(got, ref, atol=1e-6)


def test_pool_window_too_large():
    with pytest.raises(ShapeError):
        pool2d(np.zeros((1, 3, 3)), "max", 4)
    with pytest.raises(ValidationError):
        pool2d(np.zeros((1, 3, 3)), "median", 2)


def test_activations():
    assert activate(np.array(0.0), "sigmoid") == 0.5
    assert activate(np.array(-3.0), "relu") == 0
    assert activate(np.array(math.log(3)), "sigmoid") == pytest.approx(0.75, abs=1e-12)
    big = activate(np.array([-1000.0, 1000.0]), "sigmoid")
    assert np.all(np.isfinite(big)) and big[0] == 0 and big[1] == 1


def test_normalize_identity_on_standardized_channel(rng):
    x = rng.normal(size=(1, 8, 8))
    x = (x - x.mean()) / x.std()
    np.testing.assert_allclose(normalize_layer(x, NormParams.identity(1)), x, atol=1e-6)


def test_normalize_constant_channel_is_zero():
    out = normalize_layer(np.full((2, 4, 4), 7.0, np.float32))
    assert not out.any()


def test_normalize_statistics(rng):
    x = rng.uniform(-3, 5, size=(3, 8, 8))
    out = normalize_layer(x)
    assert np.max(np.abs(out.mean(axis=(1, 2)))) < 1e-6
    np.testing.assert_allclose(out.var(axis=(1, 2)), 1.0, atol=1e-4)


def test_normalize_affine():
    x = np.arange(8.0).reshape(2, 2, 2)
    norm = NormParams(np.array([2.0, 1.0]), np.array([0.0, 5.0]))
    out = normalize_layer(x, norm)
    np.testing.assert_allclose(out[0].std(), 2.0, rtol=1e-6)
    np.testing.assert_allclose(out[1].mean(), 5.0)


def test_upsample_identity_and_constant():
    x = np.arange(6.0).reshape(1, 2, 3)
    np.testing.assert_array_equal(upsample_bilinear(x, 1), x)
    np.testing.assert_allclose(upsample_bilinear(np.full((2, 3, 2), 0.4), 4), 0.4)


def test_upsample_half_pixel_convention():
    # output i samples input coordinate (i + 0.5) / 2 - 0.5, clamped to [0, 1]:
    # -0.25 -> 0, 0.25, 0.75, 1.25 -> 1
    x = np.array([[[0.0, 1.0]]])
    out = upsample_bilinear(x, 2)
    assert out.shape == (1, 2, 4)
    np.testing.assert_allclose(out[0, 0], [0.0, 0.25, 0.75, 1.0])
    np.testing.assert_allclose(out[0, 1], [0.0, 0.25, 0.75, 1.0])


def test_grad_check_polynomial(rng):
    x = rng.normal(size=(3, 4))
    assert grad_check(lambda v: np.sum(v ** 2), x, 2 * x) < 1e-8


def test_grad_check_constant(rng):
    x = rng.normal(size=5)
    assert grad_check(lambda v: 3.0, x, np.zeros(5)) == 0


def test_grad_check_detects_wrong_gradient(rng):
    x = rng.normal(size=5)
    assert grad_check(lambda v: np.sum(v ** 2), x, 3 * x) > 1e-2


def test_grad_check_nonfinite():
    with pytest.raises(NumericalError):
        grad_check(lambda v: float("nan"), np.zeros(2), np.zeros(2))


def test_init_is_seeded_and_bounded():
    a = init_conv(np.random.default_rng(7), 4, 8, 3)
    b = init_conv(np.random.default_rng(7), 4, 8, 3)
    assert a.weights.tobytes() == b.weights.tobytes()
    bound = math.sqrt(1 / 36)
    assert np.all(np.abs(a.weights) <= bound) and np.all(np.abs(a.bias) <= bound)
