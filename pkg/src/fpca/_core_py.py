"""Pure-NumPy bitline kernels.

Fallback used when the compiled extension (:mod:`fpca._core`) is absent;
the two implementations are interchangeable (see tests and the benchmark
under ``benchmarks/``).
"""

import numpy as np

KIND_LINEAR = 0
KIND_SATURATING = 1


def gather_patches(padded, n, row_starts, col_starts):
    """Receptive-field patches (B, n, n, 3) from a zero-padded image.

    Starts are in padded coordinates and must leave every window in bounds.
    """
    span = np.arange(n)
    return padded[row_starts[:, None, None, None] + span[None, :, None, None],
                  col_starts[:, None, None, None] + span[None, None, :, None],
                  np.arange(3)[None, None, None, :]]


def bitline_eval(padded, plane, row_starts, col_starts, kind, v_max, kappa, beta):
    """One bitline voltage per receptive field against a fixed weight plane.

    kind 0: v_max * mean(I*W).  kind 1: per-pixel saturation
    s = IW/(1 + beta*IW) followed by cumulative loading
    v = v_max * sum(s) / (sum(s) + kappa*N).
    """
    n = plane.shape[0]
    count = plane.size
    b = row_starts.shape[0]
    t = gather_patches(padded, n, row_starts, col_starts) * plane[None, :, :, :]
    if kind == KIND_LINEAR:
        return v_max * t.reshape(b, -1).sum(axis=1) / count
    s = t / (1.0 + beta * t)
    d = s.reshape(b, -1).sum(axis=1)
    return v_max * d / (d + kappa * count)
