"""Dense tensor kernels shared by every stage.

Tensors are plain numpy arrays. Feature maps are ``C x H x W``. Forward
computation runs in float32; gradient and oracle paths pass float64 arrays
through the same functions and get float64 back.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NumericalError, ShapeError, ValidationError

FORWARD_DTYPE = np.float32
ORACLE_DTYPE = np.float64
NORM_EPS = 1e-8


def _as_float(x, dtype=None):
    x = np.asarray(x)
    if dtype is None:
        dtype = x.dtype if x.dtype in (np.float32, np.float64) else FORWARD_DTYPE
    return np.ascontiguousarray(x, dtype=dtype)


def check_finite(x, what="tensor"):
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"{what} contains non-finite values")
    return x


@dataclass(frozen=True)
class ConvSpec:
    """Square 2-D convolution: weights ``out x in x k x k`` and bias ``out``."""

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ShapeError(f"conv weights must be out x in x k x k, got {w.shape}", axis="kernel")
        b = np.asarray(self.bias)
        if b.shape != (w.shape[0],):
            raise ShapeError(f"bias length {b.shape} != out_channels {w.shape[0]}", axis="out_channels")
        if self.stride < 1 or self.padding < 0:
            raise ValidationError("stride must be >= 1 and padding >= 0")

    @property
    def kernel_size(self):
        return self.weights.shape[2]

    @property
    def in_channels(self):
        return self.weights.shape[1]

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def num_params(self):
        return int(self.weights.size + self.bias.size)

    def zeroed(self):
        return ConvSpec(np.zeros_like(self.weights), np.zeros_like(self.bias), self.stride, self.padding)


@dataclass(frozen=True)
class NormParams:
    """Per-channel affine applied after normalization."""

    weight: np.ndarray
    bias: np.ndarray

    @classmethod
    def identity(cls, channels):
        return cls(np.ones(channels, FORWARD_DTYPE), np.zeros(channels, FORWARD_DTYPE))

    @property
    def num_params(self):
        return int(self.weight.size + self.bias.size)


def uniform_init(rng, shape, fan_in):
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(FORWARD_DTYPE)


def init_conv(rng, in_ch, out_ch, k, stride=1, padding=None):
    """Seeded uniform(+-sqrt(1/fan_in)) init; weights drawn before bias."""
    if padding is None:
        padding = k // 2
    fan_in = in_ch * k * k
    w = uniform_init(rng, (out_ch, in_ch, k, k), fan_in)
    b = uniform_init(rng, (out_ch,), fan_in)
    return ConvSpec(w, b, stride, padding)


def conv2d(x, spec: ConvSpec, backend=None):
    """Direct 2-D convolution (cross-correlation) of a ``C x H x W`` map."""
    x = _as_float(x)
    if x.ndim != 3:
        raise ShapeError(f"conv2d expects C x H x W, got shape {x.shape}", axis="rank")
    if x.shape[0] != spec.in_channels:
        raise ShapeError(
            f"input has {x.shape[0]} channels, conv expects {spec.in_channels}", axis="channels")
    k, p = spec.kernel_size, spec.padding
    for name, extent in (("height", x.shape[1]), ("width", x.shape[2])):
        if extent + 2 * p < k:
            raise ShapeError(f"{name} {extent} + 2*{p} padding is smaller than kernel {k}", axis=name)
    w = np.ascontiguousarray(spec.weights, dtype=x.dtype)
    b = np.ascontiguousarray(spec.bias, dtype=x.dtype)
    return kernels.get_backend(backend).conv2d(x, w, b, spec.stride, p)


def pool2d(x, kind, window, stride=None, backend=None):
    x = _as_float(x)
    if stride is None:
        stride = window
    if kind not in ("avg", "max"):
        raise ValidationError(f"pool kind must be 'avg' or 'max', got {kind!r}")
    if window < 1 or stride < 1:
        raise ValidationError("window and stride must be >= 1")
    for name, extent in (("height", x.shape[1]), ("width", x.shape[2])):
        if window > extent:
            raise ShapeError(f"pool window {window} exceeds {name} {extent}", axis=name)
    return kernels.get_backend(backend).pool2d(x, kind == "max", window, stride)


def sigmoid(x):
    x = np.asarray(x)
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.result_type(x, FORWARD_DTYPE))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activate(x, kind):
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "relu":
        return np.maximum(x, 0)
    raise ValidationError(f"unknown activation {kind!r}")


def normalize_layer(x, norm: NormParams | None = None, eps=NORM_EPS):
    """Per-channel zero-mean/unit-variance over H x W, then affine.

    A constant channel maps to zeros (``eps`` guards the division).
    """
    x = _as_float(x)
    if x.ndim != 3:
        raise ShapeError(f"normalize_layer expects C x H x W, got {x.shape}", axis="rank")
    mean = x.mean(axis=(1, 2), keepdims=True, dtype=np.float64)
    var = ((x - mean) ** 2).mean(axis=(1, 2), keepdims=True)
    y = (x - mean) / np.sqrt(var + eps)
    if norm is not None:
        y = y * np.asarray(norm.weight, np.float64)[:, None, None] + np.asarray(norm.bias, np.float64)[:, None, None]
    return y.astype(x.dtype)


def _interp_matrix(n_in, factor):
    """Rows map output positions to input taps (half-pixel centres, edge clamp)."""
    n_out = n_in * factor
    src = (np.arange(n_out) + 0.5) / factor - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), lo] += 1 - frac
    m[np.arange(n_out), hi] += frac
    return m


def upsample_bilinear(x, factor):
    """Bilinear upsampling by an integer factor with align_corners=False.

    Output pixel ``i`` samples input coordinate ``(i + 0.5) / factor - 0.5``,
    clamped to ``[0, n_in - 1]``.
    """
    x = _as_float(x)
    if factor < 1:
        raise ValidationError("upsample factor must be >= 1")
    if factor == 1:
        return x.copy()
    mh = _interp_matrix(x.shape[1], factor)
    mw = _interp_matrix(x.shape[2], factor)
    out = np.einsum("ih,chw,jw->cij", mh, x.astype(np.float64), mw)
    return np.ascontiguousarray(out, dtype=x.dtype)


def softmax(z, axis=-1):
    z = np.asarray(z)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def grad_check(f, x, analytic_grad, h=1e-5):
    """Max relative error between an analytic gradient and central differences.

    Evaluated in float64. The error per coordinate is
    ``|a - n| / max(1, |a|, |n|)``.
    """
    x = np.array(x, dtype=ORACLE_DTYPE)
    analytic = np.asarray(analytic_grad, dtype=ORACLE_DTYPE)
    if analytic.shape != x.shape:
        raise ShapeError(f"gradient shape {analytic.shape} != input shape {x.shape}", axis="gradient")
    numeric = np.empty_like(x)
    flat, nflat = x.reshape(-1), numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NumericalError(f"function is not finite near coordinate {i}")
        nflat[i] = (fp - fm) / (2 * h)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if x.size else 0.0
