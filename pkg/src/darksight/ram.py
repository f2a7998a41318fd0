"""Toy dual-pathway backbone with reflect fusion and a linear classifier head.

Each stage computes ``main = f1(x)`` (stride-2 conv + transformer blocks),
``reflected = f2(main)`` (one transformer block) and fuses
``concat(reflected, main)`` back to the stage width with a 1x1 projection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalError, ShapeError, ValidationError
from .tensor import ConvSpec, conv2d, init_conv, softmax, uniform_init

LN_EPS = 1e-5
MLP_RATIO = 2
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class BackboneConfig:
    in_channels: int = 16
    stage_channels: tuple = (16, 32, 64)
    main_depths: tuple = (1, 2, 11)
    num_classes: int = 101
    heads: int = 1
    mlp_ratio: int = MLP_RATIO

    def __post_init__(self):
        if len(self.stage_channels) != len(self.main_depths) or not self.stage_channels:
            raise ValidationError("stage_channels and main_depths must be non-empty and equal length")
        if any(b <= a for a, b in zip(self.stage_channels, self.stage_channels[1:])):
            raise ValidationError(f"stage channels must strictly increase: {self.stage_channels}")
        if any(d < 1 for d in self.main_depths):
            raise ValidationError("every stage needs at least one main block")
        if self.num_classes < 1:
            raise ValidationError("num_classes must be >= 1")
        if self.heads != 1:
            raise ValidationError("only single-head attention is supported")

    @property
    def num_stages(self):
        return len(self.stage_channels)


# -- transformer block -----------------------------------------------------

def _linear_init(rng, n_in, n_out):
    return uniform_init(rng, (n_in, n_out), n_in), uniform_init(rng, (n_out,), n_in)


@dataclass(frozen=True)
class Block:
    """Pre-norm block: ``x + attn(ln1(x))`` then ``x + mlp(ln2(x))``."""

    ln1: tuple
    q: tuple
    k: tuple
    v: tuple
    o: tuple
    ln2: tuple
    fc1: tuple
    fc2: tuple

    @property
    def num_params(self):
        return sum(w.size + b.size for w, b in
                   (self.ln1, self.q, self.k, self.v, self.o, self.ln2, self.fc1, self.fc2))

    def zeroed(self):
        z = lambda p: (np.zeros_like(p[0]), np.zeros_like(p[1]))  # noqa: E731
        return Block(*(z(p) for p in (self.ln1, self.q, self.k, self.v,
                                       self.o, self.ln2, self.fc1, self.fc2)))


def init_block(rng, dim, mlp_ratio=MLP_RATIO) -> Block:
    ln = lambda: (np.ones(dim, np.float32), np.zeros(dim, np.float32))  # noqa: E731
    q, k, v, o = (_linear_init(rng, dim, dim) for _ in range(4))
    fc1 = _linear_init(rng, dim, mlp_ratio * dim)
    fc2 = _linear_init(rng, mlp_ratio * dim, dim)
    return Block(ln(), q, k, v, o, ln(), fc1, fc2)


def layer_norm(tokens, params):
    mean = tokens.mean(axis=-1, keepdims=True)
    var = ((tokens - mean) ** 2).mean(axis=-1, keepdims=True)
    return (tokens - mean) / np.sqrt(var + LN_EPS) * params[0] + params[1]


def attention_weights(q, k):
    return softmax(q @ k.T / np.sqrt(q.shape[-1]).astype(q.dtype), axis=-1)


def self_attention(tokens, block: Block):
    """Single-head attention over ``N x C`` tokens (before the residual add)."""
    q = tokens @ block.q[0] + block.q[1]
    k = tokens @ block.k[0] + block.k[1]
    v = tokens @ block.v[0] + block.v[1]
    return (attention_weights(q, k) @ v) @ block.o[0] + block.o[1]


def block_forward(tokens, block: Block):
    tokens = tokens + self_attention(layer_norm(tokens, block.ln1), block)
    h = np.maximum(layer_norm(tokens, block.ln2) @ block.fc1[0] + block.fc1[1], 0)
    return tokens + (h @ block.fc2[0] + block.fc2[1])


def to_tokens(fm):
    return np.ascontiguousarray(fm.reshape(fm.shape[0], -1).T)


def from_tokens(tokens, height, width):
    return np.ascontiguousarray(tokens.T.reshape(-1, height, width))


def apply_blocks(fm, blocks):
    C, H, W = fm.shape
    t = to_tokens(fm)
    for b in blocks:
        t = block_forward(t, b)
    return from_tokens(t, H, W).astype(fm.dtype)


# -- stages ----------------------------------------------------------------

@dataclass(frozen=True)
class StageParams:
    down: ConvSpec          # 3x3 stride 2
    main_blocks: tuple
    reflected: Block
    fuse: ConvSpec          # 1x1, 2C -> C

    @property
    def main_params(self):
        return self.down.num_params + sum(b.num_params for b in self.main_blocks)

    @property
    def in_channels(self):
        return self.down.in_channels

    @property
    def channels(self):
        return self.down.out_channels


@dataclass(frozen=True)
class StageOutput:
    main: np.ndarray
    reflected: np.ndarray
    fused: np.ndarray


@dataclass(frozen=True)
class RamParams:
    config: BackboneConfig
    stages: tuple
    head: tuple             # (C_last x classes, classes)

    def param_counts(self):
        main = sum(s.main_params for s in self.stages)
        reflected = sum(s.reflected.num_params for s in self.stages)
        fusion = sum(s.fuse.num_params for s in self.stages)
        head = int(self.head[0].size + self.head[1].size)
        return {
            "main": main,
            "reflected": reflected,
            "fusion": fusion,
            "head": head,
            "total": main + reflected + fusion + head,
            # fusion projections exist only because of the reflected path
            "reflect_overhead": (reflected + fusion) / main,
        }

    def with_zero_reflected(self):
        return replace(self, stages=tuple(replace(s, reflected=s.reflected.zeroed())
                                          for s in self.stages))


def init_ram(rng, config: BackboneConfig) -> RamParams:
    stages = []
    cin = config.in_channels
    for c, depth in zip(config.stage_channels, config.main_depths):
        down = init_conv(rng, cin, c, 3, stride=2, padding=1)
        main = tuple(init_block(rng, c, config.mlp_ratio) for _ in range(depth))
        refl = init_block(rng, c, config.mlp_ratio)
        fuse = init_conv(rng, 2 * c, c, 1, padding=0)
        stages.append(StageParams(down, main, refl, fuse))
        cin = c
    head = _linear_init(rng, cin, config.num_classes)
    return RamParams(config, tuple(stages), head)


def stage_forward(x, stage: StageParams) -> StageOutput:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != stage.in_channels:
        raise ShapeError(f"stage expects {stage.in_channels} input channels, got shape {x.shape}",
                         axis="channels")
    main = apply_blocks(conv2d(x, stage.down), stage.main_blocks)
    reflected = apply_blocks(main, (stage.reflected,))
    fused = conv2d(np.concatenate([reflected, main], axis=0), stage.fuse)
    return StageOutput(main, reflected, fused)


# -- head and losses -------------------------------------------------------

@dataclass(frozen=True)
class Prediction:
    logits: np.ndarray
    probs: np.ndarray
    top1: int

    @classmethod
    def from_logits(cls, logits):
        logits = np.asarray(logits, dtype=np.float64)
        if not np.all(np.isfinite(logits)):
            raise NumericalError("non-finite logits")
        return cls(logits, softmax(logits), int(np.argmax(logits)))


def backbone_forward(x, params: RamParams):
    outs = []
    for stage in params.stages:
        out = stage_forward(x, stage)
        outs.append(out)
        x = out.fused
    return x, outs


def classify_clip(features, params: RamParams) -> Prediction:
    """Temporal mean of per-pair feature maps -> stages -> global pool -> linear."""
    if len(features) < 1:
        raise ValidationError("classify_clip needs at least one feature map")
    x = np.mean(np.stack([np.asarray(f, np.float32) for f in features]), axis=0)
    x, _ = backbone_forward(x, params)
    pooled = x.mean(axis=(1, 2), dtype=np.float64)
    w, b = params.head
    return Prediction.from_logits(pooled @ w.astype(np.float64) + b)


def cross_entropy(probs, y):
    """``(-log probs[y], probs - onehot(y), clamped)``; the gradient is w.r.t. logits."""
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= y < probs.size:
        raise ValidationError(f"class index {y} out of range for {probs.size} classes")
    p = probs[y]
    clamped = bool(p < PROB_FLOOR)
    loss = -math.log(max(p, PROB_FLOOR))
    grad = probs.copy()
    grad[y] -= 1.0
    return loss, grad, clamped


def cross_entropy_logits(logits, y):
    loss, grad, _ = cross_entropy(softmax(np.asarray(logits, np.float64)), y)
    return loss, grad


def total_loss(l_tc, l_over, l_pix, l_ce):
    parts = (l_tc, l_over, l_pix, l_ce)
    if not all(math.isfinite(v) for v in parts):
        raise NumericalError(f"non-finite loss component in {parts}")
    return l_tc + (l_over + l_pix) + l_ce
