"""Command-line entry point.

One binary with subcommands; JSON for configs/models/manifests, CSV (or
JSON tensors) for data.  Every command that writes files drops a manifest
next to each output.  Randomized commands take --seed and are reproducible
bit-for-bit.  Exit codes: 0 ok, 1 runtime error, 2 usage, 3 validation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import analog, cost, fileio, surrogate
from .config import derive_geometry, load_config
from .errors import ConfigError, FPCAError
from .schedule import RegionSkipMask, enumerate_schedule
from .weights import WeightBlock, pad_to_max

log = logging.getLogger("fpca")

EXIT_RUNTIME = 1
EXIT_VALIDATION = 3


def _configure_logging():
    level = os.environ.get("FPCA_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO,
              "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_mask(path, cfg):
    if path is None:
        return None
    with open(path) as fh:
        return RegionSkipMask.from_json(json.load(fh), cfg)


def _oracle_from_flags(name, args):
    if name == "ideal":
        return analog.IdealLinear(v_max=args.v_max)
    return analog.SaturatingOracle(v_max=args.v_max, kappa=args.kappa,
                                   beta=args.beta)


def _device_from_flags(args, cfg):
    if args.model == "ideal":
        return analog.IdealLinear(v_max=cfg.v_max)
    if args.model == "saturating":
        return analog.SaturatingOracle(v_max=cfg.v_max, kappa=args.kappa,
                                       beta=args.beta)
    if not args.surrogate:
        raise ConfigError("--model surrogate requires --surrogate PATH")
    model = surrogate.SurrogateModel.load(args.surrogate)
    expected = cfg.max_kernel**2 * 3
    if model.pixel_count != expected:
        raise ConfigError(
            f"surrogate fitted for {model.pixel_count} contributions, "
            f"config needs {expected}")
    return analog.SurrogateDevice(model)


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    geom = derive_geometry(cfg)
    print(json.dumps(geom.as_dict(), indent=1))
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    from .config import apply_binning

    image = fileio.load_image(args.image)
    if image.shape[0] == cfg.rows and cfg.binning > 1:
        image = apply_binning(image, cfg.binning)
    kernels = fileio.load_kernels(args.weights)
    block = WeightBlock.program(
        [pad_to_max(k, cfg.max_kernel) for k in kernels], cfg)
    device = _device_from_flags(args, cfg)
    mask = _load_mask(args.mask, cfg)
    counts = analog.run_frame(image, block, cfg, device, mask,
                              bn_offset=args.bn_offset)
    fileio.save_tensor(args.out, counts)
    fileio.write_manifest(args.out, {
        "command": "run", "config": str(args.config),
        "image": str(args.image), "weights": str(args.weights),
        "model": args.model, "model_params": device.params,
        "mask": str(args.mask) if args.mask else None,
        "bn_offset": args.bn_offset,
    })
    log.info("wrote %s", args.out)
    return 0


def cmd_fit(args) -> int:
    oracle = _oracle_from_flags(args.oracle, args)
    model = surrogate.fit_surrogate(
        oracle, n_pixels=args.pixels, subset_size=args.subset,
        n_buckets=args.buckets, degree=args.degree, grid_size=args.grid,
        slope=args.slope)
    model.save(args.out)
    fileio.write_manifest(args.out, {
        "command": "fit", "oracle": args.oracle,
        "oracle_params": oracle.params,
        "pixels": args.pixels, "subset": args.subset,
        "buckets": args.buckets, "degree": args.degree, "grid": args.grid,
        "slope": args.slope,
        "residual_rms": {"generic": model.generic.residual_rms,
                         **{f"bucket{b.index}": b.surface.residual_rms
                            for b in model.buckets}},
        "unreachable_buckets": [b.index for b in model.buckets
                                if not b.reachable],
    })
    log.info("fitted surrogate -> %s", args.out)
    return 0


def cmd_predict(args) -> int:
    model = surrogate.SurrogateModel.load(args.surrogate)
    tensor = fileio.load_tensor(args.input)
    if tensor.ndim == 2:
        tensor = tensor[None, ...]
    if tensor.ndim != 3 or tensor.shape[1] != 2 or tensor.shape[2] != model.pixel_count:
        raise ConfigError(
            f"expected contributions shaped (trials, 2, {model.pixel_count}), "
            f"got {tensor.shape}")
    currents, weights = tensor[:, 0, :], tensor[:, 1, :]
    step = np.atleast_1d(model.predict_step(currents, weights))
    smooth = np.atleast_1d(model.predict_sigmoid(currents, weights))
    fileio.save_tensor(args.out, np.stack([step, smooth], axis=1))
    fileio.write_manifest(args.out, {
        "command": "predict", "surrogate": str(args.surrogate),
        "input": str(args.input), "columns": ["step", "sigmoid"],
    })
    return 0


def cmd_error_report(args) -> int:
    model = surrogate.SurrogateModel.load(args.surrogate)
    oracle = _oracle_from_flags(args.oracle, args)
    stats = surrogate.error_report(model, oracle, trials=args.trials,
                                   seed=args.seed)
    with open(args.out, "w") as fh:
        json.dump(stats.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    fileio.write_manifest(args.out, {
        "command": "error-report", "surrogate": str(args.surrogate),
        "oracle": args.oracle, "oracle_params": oracle.params,
        "trials": args.trials, "seed": args.seed,
    })
    print(f"step mean |err| = {stats.mean_abs_step:.6f} "
          f"({stats.mean_abs_step / stats.v_max:.2%} of v_max)")
    print(f"sigmoid mean |err| = {stats.mean_abs_sigmoid:.6f} "
          f"({stats.mean_abs_sigmoid / stats.v_max:.2%} of v_max)")
    return 0


def cmd_sweep_cost(args) -> int:
    cfg = load_config(args.config)
    consts = cost.CostConstants(t_exp=args.t_exp, t_adc=args.t_adc)
    strides = [int(v) for v in args.strides.split(",")]
    channels = [int(v) for v in args.channels.split(",")]
    binnings = [int(v) for v in args.binnings.split(",")]
    reports, skipped = cost.sweep(cfg, strides, channels, binnings, consts)
    for stride, ch, binning, reason in skipped:
        log.info("skipped grid point S=%d c_o=%d binning=%d: %s",
                 stride, ch, binning, reason)
    baseline = cost.baseline_energy(cfg, consts)
    meta = {"constants": {k: getattr(consts, k)
                          for k in ("e_px", "e_adc", "e_io", "bw_io",
                                    "n_io_pad", "t_exp", "t_adc",
                                    "bayer_factor", "raw_bit_depth")},
            "baseline": {"definition": cost.BASELINE_DEFINITION,
                         "e_frontend_J": baseline},
            "skipped_points": [list(s) for s in skipped]}
    with open(args.out, "w") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write(",".join(cost.SWEEP_COLUMNS) + "\n")
        for row in cost.sweep_rows(reports):
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")
        # conventional-readout reference row (S=0 marks the baseline)
        fh.write(f"0,0,1,0,{baseline!r},{baseline!r},,,1.0\n")
    fileio.write_manifest(args.out, {"command": "sweep-cost",
                                     "config": str(args.config), **meta})
    return 0


def cmd_dump_block(args) -> int:
    cfg = load_config(args.config)
    kernels = fileio.load_kernels(args.weights)
    block = WeightBlock.program(
        [pad_to_max(k, cfg.max_kernel) for k in kernels], cfg)
    with open(args.out, "w") as fh:
        json.dump(block.dump(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    fileio.write_manifest(args.out, {
        "command": "dump-block", "config": str(args.config),
        "weights": str(args.weights),
        "weights_per_column": block.weights_per_column,
    })
    return 0


def cmd_dump_schedule(args) -> int:
    cfg = load_config(args.config)
    mask = _load_mask(args.mask, cfg)
    schedule = enumerate_schedule(cfg, mask)
    schedule.write_json(args.out)
    manifest = {"command": "dump-schedule", "config": str(args.config),
                "mask": str(args.mask) if args.mask else None,
                "n_cycles": schedule.n_cycles}
    fileio.write_manifest(args.out, manifest)
    if args.trace:
        schedule.write_trace(args.trace)
        fileio.write_manifest(args.trace, manifest)
    print(f"{schedule.n_cycles} cycles")
    return 0


def _add_oracle_flags(parser):
    parser.add_argument("--kappa", type=float, default=0.5,
                        help="saturating oracle loading constant")
    parser.add_argument("--beta", type=float, default=0.3,
                        help="saturating oracle per-pixel saturation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpca",
        description="In-pixel convolution array simulator and modeling tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config and echo its geometry")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="execute one frame through the array")
    p.add_argument("--config", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--model", choices=("ideal", "saturating", "surrogate"),
                   default="ideal")
    p.add_argument("--surrogate", help="fitted model JSON (for --model surrogate)")
    p.add_argument("--mask", help="region-skip JSON bitmap")
    p.add_argument("--bn-offset", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_oracle_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fit", help="fit the bucket-select surrogate")
    p.add_argument("--oracle", choices=("ideal", "saturating"),
                   default="saturating")
    p.add_argument("--pixels", type=int, default=75)
    p.add_argument("--subset", type=int, default=5)
    p.add_argument("--buckets", type=int, default=5)
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--grid", type=int, default=21)
    p.add_argument("--slope", type=float, default=100.0)
    p.add_argument("--v-max", type=float, default=1.0)
    p.add_argument("--out", required=True)
    _add_oracle_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="evaluate a fitted surrogate on inputs")
    p.add_argument("--surrogate", required=True)
    p.add_argument("--input", required=True,
                   help="tensor (trials, 2, N): currents then weights")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("error-report",
                       help="surrogate accuracy statistics vs an oracle")
    p.add_argument("--surrogate", required=True)
    p.add_argument("--oracle", choices=("ideal", "saturating"),
                   default="saturating")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--v-max", type=float, default=1.0)
    p.add_argument("--out", required=True)
    _add_oracle_flags(p)
    p.set_defaults(func=cmd_error_report)

    p = sub.add_parser("sweep-cost", help="energy/latency/bandwidth sweep CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--strides", default="1,2,3,4,5")
    p.add_argument("--channels", default="8,16,32")
    p.add_argument("--binnings", default="1")
    p.add_argument("--t-exp", type=float, default=50e-6)
    p.add_argument("--t-adc", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_cost)

    p = sub.add_parser("dump-block",
                       help="emit the programmed quantized weight layout")
    p.add_argument("--config", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_block)

    p = sub.add_parser("dump-schedule", help="emit the cycle-level control program")
    p.add_argument("--config", required=True)
    p.add_argument("--mask", help="region-skip JSON bitmap")
    p.add_argument("--out", required=True, help="schedule JSON path")
    p.add_argument("--trace", help="optional human-readable trace path")
    p.set_defaults(func=cmd_dump_schedule)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"fpca: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FPCAError, OSError, ValueError, KeyError) as exc:
        print(f"fpca: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
