# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled bitline kernels: the per-cycle gather + device closed forms,
looped in C.  API mirrors fpca._core_py."""

import numpy as np

KIND_LINEAR = 0
KIND_SATURATING = 1


def bitline_eval(double[:, :, ::1] padded, double[:, :, ::1] plane,
                 Py_ssize_t[::1] row_starts, Py_ssize_t[::1] col_starts,
                 int kind, double v_max, double kappa, double beta):
    cdef Py_ssize_t b = row_starts.shape[0]
    cdef Py_ssize_t n = plane.shape[0]
    cdef double count = n * n * 3.0
    out = np.empty(b, dtype=np.float64)
    cdef double[::1] out_v = out
    cdef Py_ssize_t k, i, j, c, r0, c0
    cdef double acc, t
    for k in range(b):
        r0 = row_starts[k]
        c0 = col_starts[k]
        acc = 0.0
        if kind == KIND_LINEAR:
            for i in range(n):
                for j in range(n):
                    for c in range(3):
                        acc += padded[r0 + i, c0 + j, c] * plane[i, j, c]
            out_v[k] = v_max * acc / count
        else:
            for i in range(n):
                for j in range(n):
                    for c in range(3):
                        t = padded[r0 + i, c0 + j, c] * plane[i, j, c]
                        acc += t / (1.0 + beta * t)
            out_v[k] = v_max * acc / (acc + kappa * count)
    return out
