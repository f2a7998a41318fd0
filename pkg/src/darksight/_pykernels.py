"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_ckernels`` module; used
when the extension is not built or ``DARKSIGHT_PURE_PYTHON=1`` is set.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d(x, w, b, stride, pad):
    k = w.shape[2]
    xp = np.pad(x.astype(np.float64), ((0, 0), (pad, pad), (pad, pad)))
    # (C, Ho', Wo', k, k) windows, then subsample by stride
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    out = np.einsum("chwij,ocij->ohw", win, w.astype(np.float64), optimize=True)
    out += b.astype(np.float64)[:, None, None]
    return np.ascontiguousarray(out, dtype=x.dtype)


def pool2d(x, use_max, window, stride):
    win = sliding_window_view(x.astype(np.float64), (window, window), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    out = win.max(axis=(3, 4)) if use_max else win.mean(axis=(3, 4))
    return np.ascontiguousarray(out, dtype=x.dtype)


def adaptive_filter(x, kernels, u):
    r = u // 2
    H, W = x.shape[1:]
    xp = np.pad(x.astype(np.float64), ((0, 0), (r, r), (r, r)))
    win = sliding_window_view(xp, (u, u), axis=(1, 2))  # (C, H, W, u, u)
    k = kernels.astype(np.float64).reshape(H, W, u, u)
    out = np.einsum("chwij,hwij->chw", win, k, optimize=True)
    return np.ascontiguousarray(out, dtype=x.dtype)
