# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Mirrors ``_pykernels`` exactly in semantics.

Accumulation is always in double; the result is cast back to the input dtype.
"""
import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()


def conv2d(floating[:, :, ::1] x, floating[:, :, :, ::1] w, floating[::1] b,
           Py_ssize_t stride, Py_ssize_t pad):
    """Zero-padded strided im2col in a compiled loop, then one BLAS product."""
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t O = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t Ho = (H + 2 * pad - K) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - K) // stride + 1
    cols_arr = np.zeros((C * K * K, Ho * Wo), dtype=np.float64)
    cdef double[:, ::1] cols = cols_arr
    cdef Py_ssize_t c, ki, kj, i, j, yi, xj, row
    with nogil:
        for c in range(C):
            for ki in range(K):
                for kj in range(K):
                    row = (c * K + ki) * K + kj
                    for i in range(Ho):
                        yi = i * stride + ki - pad
                        if yi < 0 or yi >= H:
                            continue
                        for j in range(Wo):
                            xj = j * stride + kj - pad
                            if 0 <= xj < W:
                                cols[row, i * Wo + j] = x[c, yi, xj]
    wmat = np.asarray(w, dtype=np.float64).reshape(O, C * K * K)
    out = wmat @ cols_arr
    out += np.asarray(b, dtype=np.float64)[:, None]
    dtype = np.float32 if floating is float else np.float64
    return out.reshape(O, Ho, Wo).astype(dtype)


def pool2d(floating[:, :, ::1] x, bint use_max, Py_ssize_t window, Py_ssize_t stride):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t Ho = (H - window) // stride + 1
    cdef Py_ssize_t Wo = (W - window) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((C, Ho, Wo), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t c, i, j, ki, kj
    cdef double acc, v
    cdef double inv = 1.0 / (window * window)
    with nogil:
        for c in range(C):
            for i in range(Ho):
                for j in range(Wo):
                    if use_max:
                        acc = x[c, i * stride, j * stride]
                        for ki in range(window):
                            for kj in range(window):
                                v = x[c, i * stride + ki, j * stride + kj]
                                if v > acc:
                                    acc = v
                    else:
                        acc = 0.0
                        for ki in range(window):
                            for kj in range(window):
                                acc = acc + x[c, i * stride + ki, j * stride + kj]
                        acc = acc * inv
                    out[c, i, j] = <floating>acc
    return out_arr


def adaptive_filter(floating[:, :, ::1] x, floating[:, :, ::1] kernels, Py_ssize_t u):
    """Per-pixel kernels shared across channels, zero padding, stride 1."""
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t r = u // 2
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((C, H, W), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t c, i, j, ki, kj, yi, xj
    cdef double acc
    with nogil:
        for c in range(C):
            for i in range(H):
                for j in range(W):
                    acc = 0.0
                    for ki in range(u):
                        yi = i + ki - r
                        if yi < 0 or yi >= H:
                            continue
                        for kj in range(u):
                            xj = j + kj - r
                            if xj < 0 or xj >= W:
                                continue
                            acc = acc + <double>kernels[i, j, ki * u + kj] * <double>x[c, yi, xj]
                    out[c, i, j] = <floating>acc
    return out_arr
