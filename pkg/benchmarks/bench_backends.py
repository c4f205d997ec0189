"""Benchmark the compiled bitline core against the NumPy fallback.

Runs the raw kernel on a large batch of receptive fields, then a full frame
through run_frame with each backend patched in.  Usage:

    python benchmarks/bench_backends.py
"""

import time

import numpy as np

import fpca
from fpca import FPCAConfig, IdealLinear, SaturatingOracle, WeightBlock, _backend, _core_py
from fpca.analog import run_frame

try:
    from fpca import _core
except ImportError:
    _core = None


def best_of(fn, repeat=5):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_kernel(rng):
    padded = np.ascontiguousarray(rng.uniform(0, 1, (512, 512, 3)))
    plane = np.ascontiguousarray(rng.uniform(0, 1, (5, 5, 3)))
    rows = rng.integers(0, 507, 20000).astype(np.intp)
    cols = rng.integers(0, 507, 20000).astype(np.intp)
    print(f"kernel-level: 20000 windows of 5x5x3 on a 512x512 frame")
    for kind, name, kappa, beta in ((0, "linear", 0.0, 0.0),
                                    (1, "saturating", 0.5, 0.3)):
        t_py = best_of(lambda: _core_py.bitline_eval(
            padded, plane, rows, cols, kind, 1.0, kappa, beta))
        line = f"  {name:<11s} numpy {t_py * 1e3:8.2f} ms"
        if _core is not None:
            t_c = best_of(lambda: _core.bitline_eval(
                padded, plane, rows, cols, kind, 1.0, kappa, beta))
            check = np.max(np.abs(
                _core.bitline_eval(padded, plane, rows, cols, kind, 1.0,
                                   kappa, beta)
                - _core_py.bitline_eval(padded, plane, rows, cols, kind, 1.0,
                                        kappa, beta)))
            line += (f"   compiled {t_c * 1e3:8.2f} ms"
                     f"   speedup {t_py / t_c:5.1f}x   max|diff| {check:.2e}")
        print(line)


def bench_frame(rng):
    # 255 keeps (h_i - 5 + 4) / 2 integral
    cfg = FPCAConfig(rows=255, cols=255, max_kernel=5, out_channels=8,
                     stride=2, padding=2, adc_bits=12)
    kernels = [rng.uniform(-1, 1, (5, 5, 3)) for _ in range(8)]
    block = WeightBlock.program(kernels, cfg)
    image = rng.uniform(0, 1, (255, 255, 3))
    print(f"\nframe-level: {cfg.rows}x{cfg.cols} image, 8 channels, "
          f"stride 2, pad 2")
    for model in (IdealLinear(), SaturatingOracle()):
        results = {}
        for label, impl in (("numpy", _core_py),
                            ("compiled", _core)):
            if impl is None:
                continue
            _backend._raw_bitline_eval = impl.bitline_eval
            results[label] = best_of(
                lambda: run_frame(image, block, cfg, model), repeat=3)
        name = type(model).__name__
        line = f"  {name:<16s}" + "".join(
            f" {label} {t * 1e3:8.2f} ms " for label, t in results.items())
        if len(results) == 2:
            line += f"  speedup {results['numpy'] / results['compiled']:5.1f}x"
        print(line)
    _backend._raw_bitline_eval = (_core or _core_py).bitline_eval


def main():
    print(f"active backend at import: {fpca.BACKEND}")
    if _core is None:
        print("compiled core not built; showing fallback timings only")
    rng = np.random.default_rng(0)
    bench_kernel(rng)
    bench_frame(rng)


if __name__ == "__main__":
    main()
