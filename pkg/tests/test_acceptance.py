"""Acceptance suite: one test group per numbered criterion.

Each test is named ``test_cNN_...``; the terminal summary (see conftest.py)
prints one PASS/FAIL line per criterion number. Run on its own with
``python3 -m pytest tests/test_acceptance.py -v``.
"""
import csv
import io
import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from darksight.config import RunConfig
from darksight.curate import ManifestEntry, curate, filter_classes, split_80_20, stats
from darksight.gdq import LOW_LIGHT, NORMAL_LIGHT, classify, darkness_index
from darksight.lam import (BETA, FilterBank, IlluminationMap, apply_filter_bank, estimate_gamma,
                           gamma_from_means, gamma_transform, l_over, l_pix, minmax_normalize)
from darksight.pipeline import gradcheck_all, pipeline_run, rows_to_csv, sweep
from darksight.ram import BackboneConfig, cross_entropy, init_ram, stage_forward
from darksight.tcm import gated_fusion, l_scf, l_tc
from darksight.tensor import ConvSpec, conv2d
from darksight.video_io import Clip

from oracles import naive_darkness


def test_c01_gdq_oracle_equivalence():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        T = int(rng.integers(1, 9))
        H, W = (int(v) for v in rng.integers(1, 17, size=2))
        frames = rng.integers(0, 256, (T, 3, H, W), dtype=np.uint8)
        _, _, expect = naive_darkness(frames.astype(float).tolist())
        worst = max(worst, abs(darkness_index(Clip(frames)).D_v - expect))
    elapsed = time.perf_counter() - start
    gray = np.array([[[10, 10], [30, 30]], [[30, 50], [50, 70]]], np.uint8)
    hand = darkness_index(Clip(np.repeat(gray[:, None], 3, axis=1))).D_v
    print(f"max |D_v - oracle| = {worst:.2e}, hand example = {hand:.6f}, {elapsed:.2f} s")
    assert worst < 1e-9
    assert abs(hand - 0.8876) < 1e-4
    assert elapsed < 5


def test_c02_threshold_semantics():
    assert classify(-0.877, 0.877) == NORMAL_LIGHT
    assert classify(-0.8771, 0.877) == LOW_LIGHT


def test_c03_gamma_identities():
    assert gamma_from_means(0.5, 0.5).gamma == 1
    assert gamma_from_means(0.25, 0.5).gamma == 0.5
    flat = np.full((3, 8, 8), 0.25)
    direct = gamma_transform(flat, gamma_from_means(0.25, 0.5).gamma)
    normalized = gamma_transform(minmax_normalize(flat), estimate_gamma(flat, 0.5).gamma)
    assert np.abs(direct - 0.5).max() < 1e-6
    assert np.abs(normalized - 0.5).max() < 1e-6


def test_c04_loss_identities():
    rng = np.random.default_rng(4)
    x = rng.uniform(size=(4, 3, 8, 8))
    e = rng.uniform(size=(4, 3, 8, 8))
    assert l_tc(x, x, 4)[0] == 0
    base = l_tc(e, x, 4)[0]
    assert abs(l_tc(e + 0.3, x, 4)[0] - base) < 1e-9  # one offset shared by every frame

    Y, P = rng.uniform(size=(2, 8, 8))
    assert l_scf(Y, P, 4)[0] == pytest.approx(l_scf(P, Y, 4)[0], abs=1e-15)
    assert l_scf(Y, P, 1)[0] == 0

    I = rng.uniform(0.05, 1, (8, 8))
    alpha = 0.5 / I.mean()
    assert l_over(IlluminationMap.for_input(np.full((8, 8), 1 / alpha), I))[0] < 1e-28
    target = BETA * (alpha * I) ** alpha
    assert l_pix(IlluminationMap.for_input(target, I), I)[0] < 1e-28

    assert abs(cross_entropy(np.full(101, 1 / 101), 0)[0] - math.log(101)) < 1e-6


@pytest.mark.xfail(strict=True, reason="absolute RGB differences do not cancel offsets that vary "
                                      "from frame to frame")
def test_c04_per_frame_offset_invariance():
    rng = np.random.default_rng(4)
    x = rng.uniform(size=(4, 3, 8, 8))
    e = rng.uniform(size=(4, 3, 8, 8))
    offsets = rng.uniform(-0.3, 0.3, size=(4, 1, 1, 1))
    shift = abs(l_tc(e + offsets, x, 4)[0] - l_tc(e, x, 4)[0])
    print(f"|l_tc(E + c_t) - l_tc(E)| = {shift:.3e}")
    assert shift < 1e-9


def test_c05_gradient_checks():
    start = time.perf_counter()
    report = gradcheck_all(seed=0, instances=20)
    elapsed = time.perf_counter() - start
    print(json.dumps(report["max_rel_error"], sort_keys=True), f"{elapsed:.1f} s")
    assert len(report["max_rel_error"]) == 5
    assert all(err < 1e-4 for err in report["max_rel_error"].values())
    assert report["passed"]
    assert elapsed < 60


def test_c06_zero_gates_average_halves():
    rng = np.random.default_rng(6)
    zero = ConvSpec(np.zeros((8, 8, 3, 3)), np.zeros(8), 1, 1)
    for _ in range(10):
        f = rng.normal(size=(16, 12, 12))
        z = gated_fusion(f, zero, zero)
        assert np.abs(z - 0.5 * (f[:8] + f[8:])).max() < 1e-6


def test_c07_filter_checks():
    from numpy.lib.stride_tricks import sliding_window_view

    rng = np.random.default_rng(7)
    x = rng.normal(size=(3, 12, 12)).astype(np.float32)
    assert apply_filter_bank(x, FilterBank.delta(12, 12, 5)).tobytes() == x.tobytes()
    for _ in range(50):
        x = rng.normal(size=(3, 10, 10))
        logits = rng.normal(scale=3, size=(10, 10, 25))
        kernels = np.exp(logits) / np.exp(logits).sum(axis=2, keepdims=True)
        out = apply_filter_bank(x, FilterBank(5, kernels))
        win = sliding_window_view(np.pad(x, ((0, 0), (2, 2), (2, 2))), (5, 5), axis=(1, 2))
        assert np.all(out >= win.min(axis=(3, 4)) - 1e-12)
        assert np.all(out <= win.max(axis=(3, 4)) + 1e-12)


def test_c08_reflect_topology():
    rng = np.random.default_rng(8)
    params = init_ram(np.random.default_rng(0), BackboneConfig())
    x = rng.normal(size=(16, 32, 32)).astype(np.float32)
    for stage in params.stages:
        zeroed = replace(stage, reflected=stage.reflected.zeroed())
        out = stage_forward(x, zeroed)
        expect = conv2d(np.concatenate([out.main, out.main]), stage.fuse)
        assert np.abs(out.fused - expect).max() < 1e-6
        live = stage_forward(x, stage)
        assert np.abs(live.fused - out.fused).max() > 1e-6
        x = live.fused
    overhead = params.param_counts()["reflect_overhead"]
    print(f"reflected-pathway overhead = {overhead:.4f}")
    assert overhead < 0.15


def _entries(counts):
    return [ManifestEntry(f"{c}/v{i:04d}", c, 32, -1.0) for c, n in counts.items() for i in range(n)]


def test_c09_curation():
    kept = filter_classes(_entries({"A": 200, "B": 151, "C": 150, "D": 149}), 150)
    assert len({e.class_label for e in kept}) == 3
    split = split_80_20(_entries({"A": 100}))
    assert sum(e.split == "train" for e in split) == 80
    assert sum(e.split == "test" for e in split) == 20
    replica = {f"c{i:03d}": 182 if i < 29 else 181 for i in range(101)}
    s = stats(curate(_entries(replica), 150))
    assert (s.num_classes, s.total_videos) == (101, 18310)


def _smoke_clip(seed=10):
    frames = np.random.default_rng(seed).integers(0, 50, (8, 3, 32, 32), dtype=np.uint8)
    return Clip(frames, source_path="smoke")


def test_c10_end_to_end_smoke():
    config = RunConfig(seed=3)
    start = time.perf_counter()
    first = pipeline_run(_smoke_clip(), config)
    elapsed = time.perf_counter() - start
    second = pipeline_run(_smoke_clip(), config)
    a, b = (json.dumps(r, sort_keys=True).encode() for r in (first, second))
    print(f"L_total = {first['l_total']:.6f}, {elapsed:.2f} s")
    assert math.isfinite(first["l_total"])
    assert a == b
    assert elapsed < 10


def test_c11_mu_out_sweep():
    values = [0.3, 0.4, 0.5, 0.6, 0.7]
    text = rows_to_csv(sweep("mu_out", values, [_smoke_clip()], RunConfig()))
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 5
    assert [float(r["value"]) for r in rows] == values
    for r in rows:
        for key in ("gamma", "mu_in", "D_v", "l_tc", "l_over", "l_pix", "l_ce", "l_total"):
            assert math.isfinite(float(r[key]))
