"""Frame-sequence I/O: binary PPM directories, the DVT container, clip sampling.

DVT layout (little-endian, no padding)::

    offset  size  field
    0       4     magic b"DVT1"
    4       2     version (u16, currently 1)
    6       2     dtype code (u16: 0 = uint8, 1 = float32)
    8       16    T, C, H, W (u32 each)
    24      ...   payload, row-major, frame-major
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, NumericalError, ShapeError, ValidationError

DVT_MAGIC = b"DVT1"
DVT_VERSION = 1
_DVT_HEADER = struct.Struct("<4sHHIIII")
_DTYPE_CODES = {0: np.dtype(np.uint8), 1: np.dtype("<f4")}


@dataclass(frozen=True, eq=False)
class Clip:
    """``T x 3 x H x W`` uint8 frames."""

    frames: np.ndarray
    fps: float | None = None
    source_path: str = ""

    def __post_init__(self):
        f = self.frames
        if f.dtype != np.uint8:
            raise ValidationError(f"clip frames must be uint8, got {f.dtype}")
        if f.ndim != 4:
            raise ShapeError(f"clip frames must be T x 3 x H x W, got {f.shape}", axis="rank")
        if f.shape[1] != 3:
            raise ShapeError(f"clip needs 3 channel planes, got {f.shape[1]}", axis="channels")
        if min(f.shape[0], f.shape[2], f.shape[3]) < 1:
            raise ShapeError(f"clip extents must be >= 1, got {f.shape}", axis="time")

    @property
    def T(self):
        return self.frames.shape[0]

    @property
    def height(self):
        return self.frames.shape[2]

    @property
    def width(self):
        return self.frames.shape[3]

    def normalized(self, dtype=np.float32):
        """Frames as reals in [0, 1]."""
        return self.frames.astype(dtype) / dtype(255.0)


# -- PPM -------------------------------------------------------------------

def _read_token(data, pos, path):
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("truncated PPM header", path)
    return data[start:pos], pos


def decode_ppm(data: bytes, path=None):
    """Decode one binary P6 image to a ``3 x H x W`` uint8 array."""
    magic, pos = _read_token(data, 0, path)
    if magic != b"P6":
        raise FormatError(f"not a binary PPM (magic {magic!r})", path)
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos, path)
        if not tok.isdigit():
            raise FormatError(f"bad PPM header field {tok!r}", path)
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"maxval must be 255, got {maxval}", path)
    if width < 1 or height < 1:
        raise FormatError(f"bad PPM size {width}x{height}", path)
    pos += 1  # single whitespace byte after maxval
    need = width * height * 3
    payload = data[pos:pos + need]
    if len(payload) != need:
        raise FormatError(f"truncated PPM payload: {len(payload)} of {need} bytes", path)
    img = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return np.ascontiguousarray(img.transpose(2, 0, 1))


def encode_ppm(frame):
    frame = np.asarray(frame)
    if frame.dtype != np.uint8 or frame.ndim != 3 or frame.shape[0] != 3:
        raise ValidationError(f"PPM frames must be 3 x H x W uint8, got {frame.dtype} {frame.shape}")
    h, w = frame.shape[1:]
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(frame.transpose(1, 2, 0)).tobytes()


def list_ppm_files(directory):
    directory = Path(directory)
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() == ".ppm")


def read_ppm_sequence(directory) -> Clip:
    """Read every ``*.ppm`` in ``directory``; lexicographic filename order is time."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError("not a directory", directory)
    files = list_ppm_files(directory)
    if not files:
        raise FormatError("no .ppm files found", directory)
    frames = []
    for path in files:
        frame = decode_ppm(path.read_bytes(), path)
        if frames and frame.shape != frames[0].shape:
            raise FormatError(
                f"resolution {frame.shape[2]}x{frame.shape[1]} differs from "
                f"{frames[0].shape[2]}x{frames[0].shape[1]} of {files[0].name}", path)
        frames.append(frame)
    return Clip(np.stack(frames), source_path=str(directory))


def write_ppm_sequence(clip: Clip, directory, prefix="frame"):
    """Write one P6 file per frame as ``<prefix>_00000.ppm``, ... Returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(clip.T - 1)))
    paths = []
    for t, frame in enumerate(clip.frames):
        path = directory / f"{prefix}_{t:0{width}d}.ppm"
        path.write_bytes(encode_ppm(frame))
        paths.append(path)
    return paths


# -- DVT -------------------------------------------------------------------

def write_dvt(value, path):
    """Write a Clip (uint8) or a 4-D float32 array to ``path``."""
    if isinstance(value, Clip):
        arr, code = value.frames, 0
    else:
        arr = np.asarray(value)
        if arr.dtype == np.uint8:
            code = 0
        elif arr.dtype in (np.float32, np.float64):
            arr, code = arr.astype("<f4"), 1
            if not np.all(np.isfinite(arr)):
                raise NumericalError(f"refusing to write non-finite values to {path}")
        else:
            raise ValidationError(f"DVT stores uint8 or float32, got {arr.dtype}")
    if arr.ndim != 4:
        raise ShapeError(f"DVT payload must be T x C x H x W, got {arr.shape}", axis="rank")
    header = _DVT_HEADER.pack(DVT_MAGIC, DVT_VERSION, code, *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_dvt(path):
    """Inverse of :func:`write_dvt`: uint8 payloads come back as a Clip
    when they have 3 channels, otherwise as an array."""
    data = Path(path).read_bytes()
    if len(data) < _DVT_HEADER.size:
        raise FormatError("file shorter than DVT header", path)
    magic, version, code, T, C, H, W = _DVT_HEADER.unpack_from(data)
    if magic != DVT_MAGIC:
        raise FormatError(f"bad magic {magic!r}", path)
    if version != DVT_VERSION:
        raise FormatError(f"unsupported DVT version {version}", path)
    if code not in _DTYPE_CODES:
        raise FormatError(f"unknown dtype code {code}", path)
    dtype = _DTYPE_CODES[code]
    need = T * C * H * W * dtype.itemsize
    payload = data[_DVT_HEADER.size:]
    if len(payload) != need:
        raise FormatError(f"payload is {len(payload)} bytes, header implies {need}", path)
    arr = np.frombuffer(payload, dtype=dtype).reshape(T, C, H, W).copy()
    if code == 0 and C == 3 and T >= 1:
        return Clip(arr, source_path=str(path))
    return arr.astype(np.float32) if code == 1 else arr


def load_clip(path) -> Clip:
    """Load a clip from a PPM directory or a uint8 DVT file."""
    path = Path(path)
    if path.is_dir():
        return read_ppm_sequence(path)
    value = read_dvt(path)
    if not isinstance(value, Clip):
        raise ValidationError(f"{path}: expected a uint8 3-channel clip")
    return value


def load_real_clip(path):
    """Load frames as float32 reals; uint8 sources are scaled to [0, 1]."""
    path = Path(path)
    if path.is_dir():
        return read_ppm_sequence(path).normalized()
    value = read_dvt(path)
    if isinstance(value, Clip):
        return value.normalized()
    if value.dtype == np.uint8:
        return value.astype(np.float32) / np.float32(255.0)
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"{path}: non-finite sample values")
    return value


# -- sampling --------------------------------------------------------------

def sample_indices(length, num_frames, interval):
    if length < 1:
        raise ValidationError("cannot sample from an empty clip")
    if num_frames < 1 or interval < 1:
        raise ValidationError("num_frames and interval must be >= 1")
    # short sources wrap cyclically so the output length is fixed
    return [(k * interval) % length for k in range(num_frames)]


def sample_clip(clip: Clip, num_frames, interval) -> Clip:
    idx = sample_indices(clip.frames.shape[0], num_frames, interval)
    return Clip(clip.frames[idx], fps=clip.fps, source_path=clip.source_path)


def iter_video_sources(root):
    """Yield every video under ``root``: ``*.dvt`` files and directories holding PPMs."""
    root = Path(root)
    if not root.is_dir():
        raise FormatError("not a directory", root)
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        here = Path(dirpath)
        if any(f.lower().endswith(".ppm") for f in filenames):
            yield here
        for f in sorted(filenames):
            if f.lower().endswith(".dvt"):
                yield here / f
