"""Bitline kernel selection: compiled extension when built, NumPy otherwise.

Set ``FPCA_BACKEND`` to ``compiled`` (fail if missing), ``python`` (force the
fallback), or ``auto`` (default).
"""

import os

import numpy as np

from . import _core_py

KIND_LINEAR = _core_py.KIND_LINEAR
KIND_SATURATING = _core_py.KIND_SATURATING
gather_patches = _core_py.gather_patches

_requested = os.environ.get("FPCA_BACKEND", "auto")
if _requested not in ("auto", "compiled", "python"):
    raise ValueError(f"FPCA_BACKEND must be auto|compiled|python, got {_requested!r}")

if _requested == "python":
    _impl = _core_py
else:
    try:
        from . import _core as _impl
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _core_py

BACKEND = "python" if _impl is _core_py else "compiled"
_raw_bitline_eval = _impl.bitline_eval


def bitline_eval(padded, plane, row_starts, col_starts, kind, v_max,
                 kappa=0.0, beta=0.0):
    """Backend-dispatched bitline evaluation over many receptive fields."""
    padded = np.ascontiguousarray(padded, dtype=np.float64)
    plane = np.ascontiguousarray(plane, dtype=np.float64)
    row_starts = np.ascontiguousarray(row_starts, dtype=np.intp)
    col_starts = np.ascontiguousarray(col_starts, dtype=np.intp)
    return _raw_bitline_eval(padded, plane, row_starts, col_starts,
                             int(kind), float(v_max), float(kappa), float(beta))
