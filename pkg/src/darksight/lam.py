"""Luminance adaptation: gamma brightening, per-pixel filters, illumination losses."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import NumericalError, ShapeError, ValidationError
from .tensor import (ConvSpec, NormParams, activate, conv2d, init_conv,
                     normalize_layer, pool2d, softmax, upsample_bilinear)

DEFAULT_MU_OUT = 0.5
DEFAULT_UP = 5
MU_CLAMP = 1e-3
Y_HIGH = 0.5
BETA = 0.7
S_MIN, S_MAX = 1e-3, 1e3
RATIO_EPS = 1e-6
POOL_FACTOR = 4


@dataclass(frozen=True)
class GammaParams:
    mu_out: float
    mu_in: float
    gamma: float


def gamma_from_means(mu_in, mu_out=DEFAULT_MU_OUT):
    if not 0 < mu_out < 1:
        raise ValidationError(f"mu_out must lie in (0, 1), got {mu_out}")
    mu_in = min(max(float(mu_in), MU_CLAMP), 1 - MU_CLAMP)
    return GammaParams(float(mu_out), mu_in, math.log(mu_out) / math.log(mu_in))


def minmax_normalize(x):
    """Scale to [0, 1] over the whole map; a constant map becomes 0.5 everywhere."""
    x = np.asarray(x)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.full_like(x, 0.5, dtype=np.result_type(x, np.float32))
    return (x - lo) / (hi - lo)


def estimate_gamma(x, mu_out=DEFAULT_MU_OUT) -> GammaParams:
    return gamma_from_means(float(np.mean(minmax_normalize(x), dtype=np.float64)), mu_out)


def gamma_transform(x_normalized, gamma):
    if gamma <= 0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    x = np.clip(np.asarray(x_normalized), 0, 1)
    return np.power(x, x.dtype.type(gamma))


# -- filter generation -----------------------------------------------------

@dataclass(frozen=True)
class ResBlock:
    conv1: ConvSpec
    norm1: NormParams
    conv2: ConvSpec
    norm2: NormParams

    @property
    def num_params(self):
        return sum(p.num_params for p in (self.conv1, self.norm1, self.conv2, self.norm2))

    def __call__(self, x):
        h = activate(normalize_layer(conv2d(x, self.conv1), self.norm1), "relu")
        h = normalize_layer(conv2d(h, self.conv2), self.norm2)
        return activate(h + x, "relu")


@dataclass(frozen=True)
class FilterNetParams:
    blocks: tuple
    head: ConvSpec  # 1x1, C -> u_p**2

    @property
    def u_p(self):
        return math.isqrt(self.head.out_channels)

    @property
    def num_params(self):
        return sum(b.num_params for b in self.blocks) + self.head.num_params

    def with_zero_head(self):
        return replace(self, head=self.head.zeroed())


def init_filter_net(rng, channels, u_p=DEFAULT_UP) -> FilterNetParams:
    if u_p < 1 or u_p % 2 == 0:
        raise ValidationError(f"filter size must be odd and positive, got {u_p}")
    blocks = tuple(
        ResBlock(init_conv(rng, channels, channels, 3), NormParams.identity(channels),
                 init_conv(rng, channels, channels, 3), NormParams.identity(channels))
        for _ in range(2))
    return FilterNetParams(blocks, init_conv(rng, channels, u_p * u_p, 1, padding=0))


@dataclass(frozen=True)
class FilterBank:
    """Per-pixel ``u_p x u_p`` kernels stored as ``H x W x u_p**2`` (row-major taps)."""

    u_p: int
    kernels: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        k = self.kernels
        if k.ndim != 3 or k.shape[2] != self.u_p * self.u_p:
            raise ShapeError(f"kernels must be H x W x {self.u_p ** 2}, got {k.shape}", axis="taps")
        if not np.all(np.isfinite(k)):
            raise NumericalError("filter bank contains non-finite weights")
        if self.normalized and np.max(np.abs(k.sum(axis=2, dtype=np.float64) - 1)) > 1e-5:
            raise NumericalError("normalized filter bank kernels do not sum to 1")

    @classmethod
    def delta(cls, height, width, u_p=DEFAULT_UP, dtype=np.float32):
        k = np.zeros((height, width, u_p * u_p), dtype)
        k[:, :, (u_p * u_p) // 2] = 1
        return cls(u_p, k)

    @classmethod
    def uniform(cls, height, width, u_p=DEFAULT_UP, dtype=np.float32):
        return cls(u_p, np.full((height, width, u_p * u_p), 1.0 / (u_p * u_p), dtype))


def build_filter_bank(Y, params: FilterNetParams, raw_kernels=False) -> FilterBank:
    """Predict per-pixel kernels from a brightened ``C x H x W`` map.

    avg-pool 2 -> max-pool 2 -> two residual blocks -> 1x1 conv to ``u_p**2``
    taps -> bilinear x4 -> per-pixel softmax (skipped with ``raw_kernels``).
    """
    Y = np.asarray(Y, dtype=np.float32)
    H, W = Y.shape[1:]
    for name, extent in (("height", H), ("width", W)):
        if extent < POOL_FACTOR or extent % POOL_FACTOR:
            raise ShapeError(f"{name} {extent} must be a positive multiple of {POOL_FACTOR}", axis=name)
    h = pool2d(pool2d(Y, "avg", 2), "max", 2)
    for block in params.blocks:
        h = block(h)
    logits = upsample_bilinear(conv2d(h, params.head), POOL_FACTOR)
    taps = np.ascontiguousarray(logits.transpose(1, 2, 0))
    if raw_kernels:
        return FilterBank(params.u_p, taps, normalized=False)
    return FilterBank(params.u_p, softmax(taps.astype(np.float64), axis=2).astype(np.float32))


def apply_filter_bank(x, bank: FilterBank, backend=None):
    """Filter every channel of ``x`` with the shared per-pixel kernels (zero padding)."""
    x = np.ascontiguousarray(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float32)
    if x.ndim != 3:
        raise ShapeError(f"expected C x H x W, got {x.shape}", axis="rank")
    if x.shape[1:] != bank.kernels.shape[:2]:
        raise ShapeError(f"map extent {x.shape[1:]} != filter bank extent {bank.kernels.shape[:2]}",
                         axis="height" if x.shape[1] != bank.kernels.shape[0] else "width")
    k = np.ascontiguousarray(bank.kernels, dtype=x.dtype)
    return kernels.get_backend(backend).adaptive_filter(x, k, bank.u_p)


@dataclass(frozen=True)
class LamResult:
    gamma: GammaParams
    brightened: np.ndarray
    bank: FilterBank
    output: np.ndarray


def luminance_adapt(x, params: FilterNetParams, mu_out=DEFAULT_MU_OUT,
                    filter_source="x", raw_kernels=False) -> LamResult:
    """Full adaptation of one map. ``filter_source`` picks what the kernels
    filter: the original input ``"x"`` or the gamma-brightened map ``"y"``."""
    if filter_source not in ("x", "y"):
        raise ValidationError(f"filter_source must be 'x' or 'y', got {filter_source!r}")
    g = estimate_gamma(x, mu_out)
    Y = gamma_transform(minmax_normalize(np.asarray(x, np.float32)), g.gamma).astype(np.float32)
    bank = build_filter_bank(Y, params, raw_kernels)
    out = apply_filter_bank(x if filter_source == "x" else Y, bank)
    return LamResult(g, Y, bank, out)


# -- illumination losses ---------------------------------------------------

def luminance(x):
    """Channel mean of a ``C x H x W`` (or ``T x C x H x W``) map."""
    return np.asarray(x, np.float64).mean(axis=-3)


@dataclass(frozen=True)
class IlluminationMap:
    S: np.ndarray
    Y_L: float
    Y_H: float = Y_HIGH
    beta: float = BETA
    clamped: int = 0

    @property
    def alpha(self):
        if not self.Y_L > 0:
            raise ValidationError(f"input luminance mean must be positive, got {self.Y_L}")
        return self.Y_H / self.Y_L

    @classmethod
    def for_input(cls, S, I_lum, **kw):
        return cls(np.asarray(S, np.float64), float(np.mean(I_lum)), **kw)


def derive_illumination(inp, enhanced) -> IlluminationMap:
    """``S = I_lum / (enhanced_lum + eps)``, clamped to ``[1e-3, 1e3]``."""
    inp, enhanced = np.asarray(inp), np.asarray(enhanced)
    if inp.shape != enhanced.shape:
        raise ShapeError(f"input {inp.shape} and enhanced {enhanced.shape} differ", axis="map")
    I, E = luminance(inp), luminance(enhanced)
    raw = I / (E + RATIO_EPS)
    S = np.clip(raw, S_MIN, S_MAX)
    return IlluminationMap(S, float(I.mean()), clamped=int(np.count_nonzero(S != raw)))


def l_over(illum: IlluminationMap):
    """Mean of ``(S - 1/alpha)^2`` and its gradient w.r.t. ``S``."""
    S = np.asarray(illum.S, np.float64)
    r = S - 1.0 / illum.alpha
    return float(np.mean(r * r)), 2.0 * r / S.size


def pixel_target(I_lum, alpha, beta=BETA):
    aI = alpha * np.asarray(I_lum, np.float64)
    if np.any(aI <= 0):
        raise ValidationError("alpha * I must be positive everywhere")
    # the exponent is alpha, as in the original formulation
    return beta * aI ** alpha


def l_pix(illum: IlluminationMap, I_lum):
    """Mean of ``(S - beta * (alpha I)^alpha)^2`` and its gradient w.r.t. ``S``."""
    S = np.asarray(illum.S, np.float64)
    I_lum = np.asarray(I_lum, np.float64)
    if I_lum.shape != S.shape:
        raise ShapeError(f"luminance {I_lum.shape} and S {S.shape} differ", axis="map")
    r = S - pixel_target(I_lum, illum.alpha, illum.beta)
    return float(np.mean(r * r)), 2.0 * r / S.size
