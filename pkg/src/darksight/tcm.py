"""Time-consistency encoder and the temporal-consistency losses.

The encoder pairs adjacent frames, runs a shallow conv stack, splits the
result into two channel halves and fuses them with sigmoid gates::

    z = F1 * sigmoid(conv_a(F1)) + F2 * sigmoid(conv_b(F2))

The losses compare region-level structure of frame-to-frame RGB differences
between an enhanced clip and its input.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ShapeError, ValidationError
from .tensor import (ConvSpec, NormParams, activate, conv2d, init_conv,
                     normalize_layer, sigmoid)

DEFAULT_GRID = 4


@dataclass(frozen=True)
class TcmParams:
    base_channels: int
    pre: tuple      # three (ConvSpec, NormParams): 6 -> 2C -> 2C -> 2C
    gates: tuple    # two ConvSpec, C -> C
    post: tuple     # three (ConvSpec, NormParams): C -> C

    def __post_init__(self):
        C = self.base_channels
        if self.pre[-1][0].out_channels != 2 * C:
            raise ShapeError("pre-split stack must emit 2C channels", axis="channels")
        for g in self.gates:
            if g.in_channels != C or g.out_channels != C:
                raise ShapeError("gate convs must map C -> C", axis="channels")

    @property
    def num_params(self):
        n = sum(c.num_params + nrm.num_params for c, nrm in self.pre + self.post)
        return n + sum(g.num_params for g in self.gates)

    def with_zero_gates(self):
        return replace(self, gates=tuple(g.zeroed() for g in self.gates))


def init_tcm(rng, base_channels=16) -> TcmParams:
    C = base_channels
    pre = tuple((init_conv(rng, cin, 2 * C, 3), NormParams.identity(2 * C))
                for cin in (6, 2 * C, 2 * C))
    gates = (init_conv(rng, C, C, 3), init_conv(rng, C, C, 3))
    post = tuple((init_conv(rng, C, C, 3), NormParams.identity(C)) for _ in range(3))
    return TcmParams(C, pre, gates, post)


def gated_fusion(f_tilde, gate_a: ConvSpec, gate_b: ConvSpec):
    """Split ``2C x H x W`` features into halves and fuse them through sigmoid gates."""
    channels = f_tilde.shape[0]
    if channels % 2:
        raise ShapeError(f"cannot split {channels} channels evenly", axis="channels")
    f1, f2 = f_tilde[: channels // 2], f_tilde[channels // 2:]
    return f1 * sigmoid(conv2d(f1, gate_a)) + f2 * sigmoid(conv2d(f2, gate_b))


def encode_pair(a, b, params: TcmParams):
    h = np.concatenate([a, b], axis=0)
    for conv, norm in params.pre:
        h = activate(normalize_layer(conv2d(h, conv), norm), "relu")
    z = gated_fusion(h, *params.gates)
    for conv, norm in params.post:
        z = normalize_layer(conv2d(z, conv), norm)
    return z


def tcm_forward(clip, params: TcmParams):
    """Map a ``T x 3 x H x W`` clip in [0, 1] to ``T - 1`` feature maps ``C x H x W``."""
    clip = np.asarray(clip, dtype=np.float32)
    if clip.ndim != 4 or clip.shape[1] != 3:
        raise ShapeError(f"expected T x 3 x H x W clip, got {clip.shape}", axis="rank")
    if clip.shape[0] < 2:
        raise ValidationError("time-consistency encoding needs at least 2 frames")
    return [encode_pair(clip[t], clip[t + 1], params) for t in range(clip.shape[0] - 1)]


# -- losses ----------------------------------------------------------------

def rgb_diff(a, b):
    """Channel mean of ``|b - a|`` for two ``3 x H x W`` frames."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"frame shapes differ: {a.shape} vs {b.shape}", axis="frame")
    return np.abs(np.asarray(b, np.float64) - a).mean(axis=0)


def _edges(n, grid):
    """Partition ``range(n)`` into ``grid`` contiguous, non-empty runs."""
    return np.arange(grid + 1) * n // grid


def region_means(m, grid):
    """Means over a ``grid x grid`` partition of the last two axes."""
    m = np.asarray(m, dtype=np.float64)
    if grid < 1 or grid > min(m.shape[-2:]):
        raise ValidationError(f"grid {grid} must be in [1, {min(m.shape[-2:])}]")
    rows, cols = _edges(m.shape[-2], grid), _edges(m.shape[-1], grid)
    sums = np.add.reduceat(np.add.reduceat(m, rows[:-1], axis=-2), cols[:-1], axis=-1)
    return sums / np.outer(np.diff(rows), np.diff(cols))


def _spread_regions(g, shape, grid):
    """Adjoint of :func:`region_means`."""
    rows, cols = _edges(shape[-2], grid), _edges(shape[-1], grid)
    hr, wc = np.diff(rows), np.diff(cols)
    per_pixel = g / np.outer(hr, wc)
    return np.repeat(np.repeat(per_pixel, hr, axis=-2), wc, axis=-1)


_NEIGHBOURS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def scf_on_regions(y, p):
    """Region-level loss and gradient w.r.t. ``y``, batched over leading axes.

    ``K`` is the number of regions in the last two axes.
    """
    gr, gc = y.shape[-2:]
    K = gr * gc
    loss = np.zeros(y.shape[:-2])
    grad = np.zeros_like(y)
    for dr, dc in _NEIGHBOURS:
        # pair every region with its neighbour in direction (dr, dc), where it exists
        r0, r1 = max(0, -dr), gr - max(0, dr)
        c0, c1 = max(0, -dc), gc - max(0, dc)
        here = (..., slice(r0, r1), slice(c0, c1))
        there = (..., slice(r0 + dr, r1 + dr), slice(c0 + dc, c1 + dc))
        d = np.abs(y[here] - y[there]) - np.abs(p[here] - p[there])
        loss += np.sum(d * d, axis=(-2, -1))
        gy = 2.0 * d * np.sign(y[here] - y[there])
        grad[here] += gy
        grad[there] -= gy
    if loss.ndim == 0:
        loss = float(loss)
    return loss / K, grad / K


def l_scf(Y, P, grid=DEFAULT_GRID):
    """Spatial consistency between two single-channel maps.

    Both maps are averaged over a ``grid x grid`` partition; every region is
    compared with each of its existing 8 neighbours. Returns ``(loss, dY)``.
    """
    Y, P = np.asarray(Y, np.float64), np.asarray(P, np.float64)
    if Y.shape != P.shape or Y.ndim != 2:
        raise ShapeError(f"maps must share a 2-D shape: {Y.shape} vs {P.shape}", axis="map")
    y, p = region_means(Y, grid), region_means(P, grid)
    loss, gy = scf_on_regions(y, p)
    return loss, _spread_regions(gy, Y.shape, grid)


def l_tc(enhanced, inp, grid=DEFAULT_GRID):
    """Temporal consistency loss and its gradient w.r.t. ``enhanced``.

    Averages :func:`l_scf` over the ``T - 1`` consecutive-frame RGB
    differences of the enhanced clip against those of the input clip.
    """
    E, I = np.asarray(enhanced, np.float64), np.asarray(inp, np.float64)
    if E.shape != I.shape:
        raise ShapeError(f"enhanced {E.shape} and input {I.shape} differ", axis="clip")
    if E.ndim != 4 or E.shape[0] < 2:
        raise ValidationError("temporal consistency needs a T x C x H x W clip with T >= 2")
    pairs, C = E.shape[0] - 1, E.shape[1]
    step = E[1:] - E[:-1]
    dy = np.abs(step).mean(axis=1)                 # rgb_diff of every consecutive pair
    di = np.abs(I[1:] - I[:-1]).mean(axis=1)
    losses, gy = scf_on_regions(region_means(dy, grid), region_means(di, grid))
    g = _spread_regions(gy, dy.shape, grid) / pairs
    s = np.sign(step) * (g / C)[:, None]
    grad = np.zeros_like(E)
    grad[1:] += s
    grad[:-1] -= s
    return float(np.mean(losses)), grad
