"""Run configuration: a plain ``key = value`` text file.

Blank lines and ``#`` comments are ignored; unknown keys are rejected. The
environment variable ``DARKSIGHT_SEED`` overrides ``seed``.
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace

from .errors import ValidationError


def _int_list(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    mu_out: float = 0.5
    u_p: int = 5
    tau: float = 0.877
    grid: int = 4
    num_frames: int = 8
    interval: int = 3
    base_channels: int = 16
    stages: tuple = (16, 32, 64)
    depths: tuple = (1, 2, 11)
    num_classes: int = 101
    filter_source: str = "x"
    raw_kernels: bool = False

    def __post_init__(self):
        if not 0 < self.mu_out < 1:
            raise ValidationError(f"mu_out must lie in (0, 1), got {self.mu_out}")
        if self.u_p < 1 or self.u_p % 2 == 0:
            raise ValidationError(f"u_p must be a positive odd integer, got {self.u_p}")
        if not self.tau > 0:
            raise ValidationError(f"tau must be positive, got {self.tau}")
        for name in ("grid", "num_frames", "interval", "base_channels", "num_classes"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.filter_source not in ("x", "y"):
            raise ValidationError(f"filter_source must be 'x' or 'y', got {self.filter_source!r}")
        if len(self.stages) != len(self.depths) or not self.stages:
            raise ValidationError("stages and depths must be non-empty lists of equal length")

    def to_dict(self):
        d = asdict(self)
        d["stages"] = list(self.stages)
        d["depths"] = list(self.depths)
        return d

    def with_values(self, **kw):
        return replace(self, **kw)


_PARSERS = {int: int, float: float, str: str, bool: _bool, tuple: _int_list}
_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def coerce(key, value):
    if key not in _TYPES:
        raise ValidationError(f"unknown config key {key!r}")
    try:
        return _PARSERS[_TYPES[key]](value)
    except ValueError as exc:
        raise ValidationError(f"bad value for {key}: {exc}") from None


def parse_config(text, env=None) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = coerce(key, value)
    env = os.environ if env is None else env
    if env.get("DARKSIGHT_SEED"):
        values["seed"] = coerce("seed", env["DARKSIGHT_SEED"])
    return RunConfig(**values)


def load_config(path=None, env=None) -> RunConfig:
    text = "" if path is None else open(path, encoding="utf-8").read()
    return parse_config(text, env)
