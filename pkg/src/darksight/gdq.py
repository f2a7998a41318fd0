"""Global darkness quantification of a video.

Per frame ``t`` with pixel intensities ``I_t``::

    mu_t    = mean(I_t)
    sigma_t = std(I_t)                        (population)
    mu_c    = mean over t of mu_t
    D_v     = mean over t of ((mu_t - mu_c) / mu_c) * sigma_t

A video is low-light when ``D_v < -tau``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .video_io import Clip, iter_video_sources

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.877
LOW_LIGHT = "low_light"
NORMAL_LIGHT = "normal_light"
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class DarknessReport:
    mu_t: list
    mu_c: float
    sigma_t: list
    D_v: float
    tau: float = DEFAULT_TAU
    label: str = NORMAL_LIGHT
    zero_baseline: bool = False

    def to_dict(self):
        return {
            "mu_t": list(self.mu_t),
            "mu_c": self.mu_c,
            "sigma_t": list(self.sigma_t),
            "D_v": self.D_v,
            "tau": self.tau,
            "label": self.label,
            "zero_baseline": self.zero_baseline,
        }


def _frames(clip):
    frames = clip.frames if isinstance(clip, Clip) else np.asarray(clip)
    if frames.ndim == 3:
        frames = frames[None]
    if frames.ndim != 4 or frames.shape[1] != 3:
        raise ValidationError(f"expected T x 3 x H x W frames, got {frames.shape}")
    if frames.shape[0] < 1 or frames[0].size == 0:
        raise ValidationError("darkness needs at least one non-empty frame")
    return frames


def intensity(frames, luma=False):
    """Per-pixel intensity on the 0-255 scale: RGB mean, or BT.601 luma."""
    f = np.asarray(frames, dtype=np.float64)
    if luma:
        return np.tensordot(_LUMA, f, axes=([0], [-3]))
    return f.mean(axis=-3)


def frame_brightness(frame, luma=False):
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[0] != 3 or frame.size == 0:
        raise ValidationError(f"expected a non-empty 3 x H x W frame, got {frame.shape}")
    return float(intensity(frame, luma).mean())


def classify(D_v, tau=DEFAULT_TAU):
    """Strict threshold: ``D_v == -tau`` is still normal light."""
    if isinstance(D_v, DarknessReport):
        D_v = D_v.D_v
    if not tau > 0:
        raise ValidationError(f"tau must be positive, got {tau}")
    return LOW_LIGHT if D_v < -tau else NORMAL_LIGHT


def darkness_index(clip, tau=DEFAULT_TAU, luma=False, baseline=None) -> DarknessReport:
    """Compute the darkness report of a clip.

    ``clip`` may be a :class:`Clip` or any real ``T x 3 x H x W`` array on the
    0-255 scale. ``baseline`` overrides the per-video ``mu_c`` used inside
    ``D_v`` (corpus-wide baseline); the reported ``mu_c`` stays per-video.
    """
    frames = _frames(clip)
    I = intensity(frames, luma).reshape(frames.shape[0], -1)
    mu_t = I.mean(axis=1)
    sigma_t = I.std(axis=1)
    mu_c = float(mu_t.mean())
    ref = mu_c if baseline is None else float(baseline)
    zero = ref == 0.0
    if zero:
        log.warning("zero brightness baseline; darkness index defined as 0")
        D_v = 0.0
    else:
        D_v = float(np.mean((mu_t - ref) / ref * sigma_t))
    return DarknessReport(mu_t.tolist(), mu_c, sigma_t.tolist(), D_v, tau,
                          classify(D_v, tau), zero)


def _scan_one(path, tau, luma):
    from .video_io import load_clip

    clip = load_clip(path)
    rep = darkness_index(clip, tau, luma)
    return str(path), clip, rep


def scan(root, tau=DEFAULT_TAU, luma=False, baseline="video", jobs=1):
    """Darkness records for every video under ``root``, sorted by path.

    With ``baseline="corpus"`` the darkness index of every video is recomputed
    against the mean of all per-video ``mu_c`` values (experimental).
    """
    if baseline not in ("video", "corpus"):
        raise ValidationError(f"baseline must be 'video' or 'corpus', got {baseline!r}")
    sources = sorted(iter_video_sources(root), key=str)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(lambda p: _scan_one(p, tau, luma), sources))
    else:
        results = [_scan_one(p, tau, luma) for p in sources]
    if baseline == "corpus" and results:
        corpus_mu = float(np.mean([r.mu_c for _, _, r in results]))
        results = [(p, c, darkness_index(c, tau, luma, baseline=corpus_mu)) for p, c, _ in results]
    records = []
    for path, clip, rep in results:
        records.append({
            "path": path,
            "T": clip.T,
            "H": clip.height,
            "W": clip.width,
            "mu_c": rep.mu_c,
            "D_v": rep.D_v,
            "label": rep.label,
        })
    return records
