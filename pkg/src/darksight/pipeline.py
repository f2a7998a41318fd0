"""End-to-end forward pipeline, parameter sweeps and the gradient audit.

Model parameters are drawn from one ``numpy.random.default_rng(seed)`` in a
fixed order: time-consistency encoder, feature-level filter net, pixel-level
filter net, backbone (stages in order, then the classifier head).
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, coerce
from .errors import DarksightError, StageError, ValidationError
from .gdq import darkness_index
from .lam import (FilterNetParams, GammaParams, apply_filter_bank, build_filter_bank,
                  derive_illumination, estimate_gamma, gamma_transform, init_filter_net,
                  l_over, l_pix, luminance, luminance_adapt, minmax_normalize,
                  IlluminationMap)
from .ram import (BackboneConfig, RamParams, classify_clip, cross_entropy,
                  cross_entropy_logits, init_ram, total_loss)
from .tcm import TcmParams, init_tcm, l_scf, l_tc, region_means, rgb_diff, tcm_forward
from .tensor import grad_check
from .video_io import Clip, load_clip, sample_clip

GRADCHECK_TOL = 1e-4
LUMA_FLOOR = 1e-3


@dataclass(frozen=True)
class Model:
    tcm: TcmParams
    feature_filter: FilterNetParams
    pixel_filter: FilterNetParams
    ram: RamParams

    def param_counts(self):
        counts = self.ram.param_counts()
        counts["tcm"] = self.tcm.num_params
        counts["feature_filter"] = self.feature_filter.num_params
        counts["pixel_filter"] = self.pixel_filter.num_params
        return counts


def backbone_config(config: RunConfig) -> BackboneConfig:
    return BackboneConfig(in_channels=config.base_channels, stage_channels=tuple(config.stages),
                          main_depths=tuple(config.depths), num_classes=config.num_classes)


def build_model(config: RunConfig) -> Model:
    rng = np.random.default_rng(config.seed)
    tcm = init_tcm(rng, config.base_channels)
    feature_filter = init_filter_net(rng, config.base_channels, config.u_p)
    pixel_filter = init_filter_net(rng, 3, config.u_p)
    ram = init_ram(rng, backbone_config(config))
    return Model(tcm, feature_filter, pixel_filter, ram)


@dataclass(frozen=True)
class EnhanceResult:
    gamma: GammaParams
    enhanced: np.ndarray  # T x 3 x H x W float32


def enhance_clip(frames, filter_net: FilterNetParams, mu_out=0.5, filter_source="y",
                 raw_kernels=False) -> EnhanceResult:
    """Pixel-level adaptation of a ``T x 3 x H x W`` clip in [0, 1].

    One gamma is estimated for the whole clip; kernels are predicted per frame
    from the brightened frame and applied to ``filter_source`` (``"y"``:
    brightened frame, ``"x"``: original frame).
    """
    frames = np.asarray(frames, dtype=np.float32)
    g = estimate_gamma(frames, mu_out)
    Y = gamma_transform(minmax_normalize(frames), g.gamma).astype(np.float32)
    out = np.empty_like(frames)
    for t in range(frames.shape[0]):
        bank = build_filter_bank(Y[t], filter_net, raw_kernels)
        out[t] = apply_filter_bank(Y[t] if filter_source == "y" else frames[t], bank)
    return EnhanceResult(g, out)


def illumination_losses(inp, enhanced):
    """Per-frame ``(l_over, l_pix)`` averaged over the clip.

    Input luminance is floored at ``LUMA_FLOOR`` so black frames stay finite.
    """
    inp = np.maximum(np.asarray(inp, np.float64), LUMA_FLOOR)
    lo, lp = [], []
    for t in range(inp.shape[0]):
        illum = derive_illumination(inp[t], enhanced[t])
        lo.append(l_over(illum)[0])
        lp.append(l_pix(illum, luminance(inp[t]))[0])
    return float(np.mean(lo)), float(np.mean(lp))


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except DarksightError as exc:
        raise StageError(name, exc) from exc
    except (ValueError, ArithmeticError) as exc:
        raise StageError(name, exc) from exc


def pipeline_run(clip, config: RunConfig, label=0, model: Model | None = None, timing=False):
    """Forward pass over one clip; returns a JSON-ready report.

    ``clip`` is a :class:`Clip` or a path to a PPM directory / DVT file.
    """
    t0 = time.perf_counter()
    if not isinstance(clip, Clip):
        clip = _stage("load", load_clip, clip)
    if not 0 <= label < config.num_classes:
        raise ValidationError(f"label {label} out of range for {config.num_classes} classes")
    if model is None:
        model = build_model(config)
    dark = _stage("gdq", darkness_index, clip, config.tau)
    sampled = _stage("sample", sample_clip, clip, config.num_frames, config.interval)
    frames = sampled.normalized()
    if frames.shape[0] < 2:
        raise StageError("tcm", ValidationError("num_frames must be >= 2 for the pipeline"))

    features = _stage("tcm", tcm_forward, frames, model.tcm)
    adapted = [_stage("lam", luminance_adapt, x, model.feature_filter, config.mu_out,
                      config.filter_source, config.raw_kernels) for x in features]
    enh = _stage("enhance", enhance_clip, frames, model.pixel_filter, config.mu_out,
                 "y", config.raw_kernels)
    loss_tc, _ = _stage("l_tc", l_tc, enh.enhanced, frames, config.grid)
    loss_over, loss_pix = _stage("l_lam", illumination_losses, frames, enh.enhanced)
    pred = _stage("ram", classify_clip, [a.output for a in adapted], model.ram)
    loss_ce, _, ce_clamped = cross_entropy(pred.probs, label)
    loss_total = _stage("total", total_loss, loss_tc, loss_over, loss_pix, loss_ce)

    order = np.argsort(-pred.probs, kind="stable")[:5]
    report = {
        "source": clip.source_path,
        "config": config.to_dict(),
        "T": int(clip.T),
        "H": int(clip.height),
        "W": int(clip.width),
        "sampled_frames": int(frames.shape[0]),
        "D_v": dark.D_v,
        "mu_c": dark.mu_c,
        "light": dark.label,
        "gamma": enh.gamma.gamma,
        "mu_in": enh.gamma.mu_in,
        "feature_gamma": [a.gamma.gamma for a in adapted],
        "losses": {"l_tc": loss_tc, "l_over": loss_over, "l_pix": loss_pix, "l_ce": loss_ce},
        "l_total": loss_total,
        "label": int(label),
        "ce_clamped": ce_clamped,
        "top1": pred.top1,
        "top5": [[int(i), float(pred.probs[i])] for i in order],
    }
    if timing:
        report["seconds"] = time.perf_counter() - t0
    return report


# -- sweep -----------------------------------------------------------------

SWEEP_PARAMS = ("mu_out", "u_p", "grid")
SWEEP_COLUMNS = ("param", "value", "clip", "gamma", "mu_in", "D_v",
                 "l_tc", "l_over", "l_pix", "l_ce", "l_total", "top1")


def sweep(param, values, clips, config: RunConfig, label=0):
    """One row per (value, clip); every value is validated before any run."""
    if param not in SWEEP_PARAMS:
        raise ValidationError(f"sweep parameter must be one of {SWEEP_PARAMS}, got {param!r}")
    if not values:
        raise ValidationError("sweep needs at least one value")
    configs = [config.with_values(**{param: coerce(param, v)}) for v in values]
    clips = [c if isinstance(c, Clip) else load_clip(c) for c in clips]
    rows = []
    for cfg in configs:
        model = build_model(cfg)
        for clip in clips:
            r = pipeline_run(clip, cfg, label, model=model)
            rows.append({
                "param": param,
                "value": getattr(cfg, param),
                "clip": clip.source_path,
                "gamma": r["gamma"],
                "mu_in": r["mu_in"],
                "D_v": r["D_v"],
                **r["losses"],
                "l_total": r["l_total"],
                "top1": r["top1"],
            })
    return rows


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        # repr keeps full precision and is locale independent
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


# -- gradient audit --------------------------------------------------------

KINK_MARGIN = 1e-3


def _neighbour_gaps(m):
    gaps = [np.abs(m[:, 1:] - m[:, :-1]), np.abs(m[1:, :] - m[:-1, :]),
            np.abs(m[1:, 1:] - m[:-1, :-1]), np.abs(m[1:, :-1] - m[:-1, 1:])]
    return min(float(g.min()) for g in gaps if g.size)


def kink_free_clip(rng, shape=(4, 3, 8, 8), grid=4, margin=KINK_MARGIN):
    """Random clip whose absolute values all sit at least ``margin`` from a kink.

    Consecutive frames differ by at least ``margin`` at every pixel, and the
    region means of every RGB-difference map are pairwise separated.
    """
    while True:
        steps = rng.uniform(0.02, 0.3, shape[:1] + shape[1:])[1:]
        steps *= rng.choice([-1.0, 1.0], size=steps.shape)
        first = rng.uniform(0, 1, (1,) + tuple(shape[1:]))
        clip = np.concatenate([first, first + np.cumsum(steps, axis=0)])
        diffs = [rgb_diff(clip[t], clip[t + 1]) for t in range(shape[0] - 1)]
        if grid == 1 or all(_neighbour_gaps(region_means(d, grid)) > margin for d in diffs):
            return clip


def kink_free_map(rng, shape=(8, 8), grid=4, margin=KINK_MARGIN):
    while True:
        m = rng.uniform(0, 1, shape)
        if _neighbour_gaps(region_means(m, grid)) > margin:
            return m


def _case_l_tc(rng):
    enh = kink_free_clip(rng)
    inp = rng.uniform(0, 1, enh.shape)
    _, g = l_tc(enh, inp, 4)
    return (lambda e: l_tc(e, inp, 4)[0]), enh, g


def _case_l_scf(rng):
    Y, P = kink_free_map(rng), rng.uniform(0, 1, (8, 8))
    _, g = l_scf(Y, P, 4)
    return (lambda y: l_scf(y, P, 4)[0]), Y, g


def _case_l_over(rng):
    I = rng.uniform(0.05, 1, (8, 8))
    S = rng.uniform(0.1, 3, (8, 8))
    f = lambda s: l_over(IlluminationMap.for_input(s, I))[0]  # noqa: E731
    return f, S, l_over(IlluminationMap.for_input(S, I))[1]


def _case_l_pix(rng):
    I = rng.uniform(0.05, 1, (8, 8))
    S = rng.uniform(0.1, 3, (8, 8))
    f = lambda s: l_pix(IlluminationMap.for_input(s, I), I)[0]  # noqa: E731
    return f, S, l_pix(IlluminationMap.for_input(S, I), I)[1]


def _case_cross_entropy(rng):
    logits = rng.normal(0, 2, 10)
    y = int(rng.integers(10))
    return (lambda z: cross_entropy_logits(z, y)[0]), logits, cross_entropy_logits(logits, y)[1]


GRADCHECK_CASES = {
    "l_tc": _case_l_tc,
    "l_scf": _case_l_scf,
    "l_over": _case_l_over,
    "l_pix": _case_l_pix,
    "cross_entropy": _case_cross_entropy,
}


def gradcheck_all(seed=0, instances=20, cases=None):
    """Max relative gradient error per loss over ``instances`` random draws."""
    cases = GRADCHECK_CASES if cases is None else cases
    errors = {}
    for name, make in cases.items():
        rng = np.random.default_rng([seed, sum(map(ord, name))])
        worst = 0.0
        for _ in range(instances):
            f, x, g = make(rng)
            worst = max(worst, grad_check(f, x, g))
        errors[name] = worst
    passed = all(math.isfinite(e) and e < GRADCHECK_TOL for e in errors.values())
    return {"seed": seed, "instances": instances, "tolerance": GRADCHECK_TOL,
            "max_rel_error": errors, "passed": passed}
