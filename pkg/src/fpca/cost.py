"""Analytical frontend energy, latency, and bandwidth-reduction models.

All quantities are SI: joules, seconds, hertz.  Cycle counts come from the
same closed form the scheduler realizes, N_C = 2 * h_o * c_o * lcm(S, n)/S,
optionally replaced by the post-skipping count of an enumerated schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

from .config import FPCAConfig, derive_geometry, validate


@dataclass(frozen=True)
class CostConstants:
    """Per-operation energy/timing constants and readout conversion factors."""

    e_px: float = 148e-12        # J per in-pixel convolution operation
    e_adc: float = 41.9e-12      # J per ADC read
    e_io: float = 12.34e-12      # J per transmitted bit (LVDS)
    bw_io: float = 1e9           # bit/s per IO pad
    n_io_pad: int = 24           # IO pads on the chip
    t_exp: float = 50e-6         # s exposure per cycle
    t_adc: float = 1e-6          # s ADC read per cycle
    bayer_factor: float = 4.0 / 3.0   # RGGB -> RGB compression credit
    raw_bit_depth: int = 12      # bits per color in conventional readout

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value <= 0:
                raise ValueError(f"CostConstants.{name} must be positive")


@dataclass(frozen=True)
class CostReport:
    """One sweep point; fps = 1 / t_frontend."""

    stride: int
    out_channels: int
    binning: int
    n_cycles: int
    e_frontend: float     # J
    e_io: float           # J
    t_frontend: float     # s
    max_fps: float        # 1/s
    bandwidth_reduction: float


def cycle_count(cfg: FPCAConfig) -> int:
    """Schedule length without skipping: 2 * h_o * c_o * lcm(S, n) / S."""
    geom = derive_geometry(cfg)
    period = math.lcm(cfg.stride, cfg.max_kernel) // cfg.stride
    return 2 * geom.out_height * cfg.out_channels * period


def energy(cfg: FPCAConfig, consts: CostConstants,
           n_cycles: int | None = None) -> tuple[float, float]:
    """(E_FRONTEND, E_IO) in joules.

    E_IO = h_o * w_o * c_o * b_ADC * e_IO
    E_FRONTEND = N_C * (e_PX + e_ADC) + E_IO
    """
    geom = derive_geometry(cfg)
    if n_cycles is None:
        n_cycles = cycle_count(cfg)
    e_io = (geom.out_height * geom.out_width * cfg.out_channels
            * cfg.adc_bits * consts.e_io)
    e_frontend = n_cycles * (consts.e_px + consts.e_adc) + e_io
    return e_frontend, e_io


def latency(cfg: FPCAConfig, consts: CostConstants,
            n_cycles: int | None = None) -> tuple[float, float]:
    """(T_FRONTEND, max_fps).

    T_IO = w_o * b_ADC / (BW_IO * n_IO_pad)
    T_FRONTEND = N_C * (T_EXP + T_ADC + T_IO)
    """
    geom = derive_geometry(cfg)
    if n_cycles is None:
        n_cycles = cycle_count(cfg)
    t_io = geom.out_width * cfg.adc_bits / (consts.bw_io * consts.n_io_pad)
    t_frontend = n_cycles * (consts.t_exp + consts.t_adc + t_io)
    return t_frontend, 1.0 / t_frontend


def bandwidth_reduction(cfg: FPCAConfig, consts: CostConstants) -> float:
    """Raw sensor volume over first-layer output volume.

    BR = (I / O) * bayer_factor * (raw_bit_depth / b_ADC) with
    I = h_i * w_i * 3 and O = h_o * w_o * c_o.
    """
    geom = derive_geometry(cfg)
    raw = geom.in_height * geom.in_width * 3
    out = geom.out_height * geom.out_width * cfg.out_channels
    return (raw / out) * consts.bayer_factor * (consts.raw_bit_depth / cfg.adc_bits)


def report(cfg: FPCAConfig, consts: CostConstants,
           n_cycles: int | None = None) -> CostReport:
    if n_cycles is None:
        n_cycles = cycle_count(cfg)
    e_frontend, e_io = energy(cfg, consts, n_cycles)
    t_frontend, fps = latency(cfg, consts, n_cycles)
    return CostReport(
        stride=cfg.stride, out_channels=cfg.out_channels, binning=cfg.binning,
        n_cycles=n_cycles, e_frontend=e_frontend, e_io=e_io,
        t_frontend=t_frontend, max_fps=fps,
        bandwidth_reduction=bandwidth_reduction(cfg, consts))


BASELINE_DEFINITION = (
    "conventional CIS readout approximation: h_i*w_i*3*raw_bit_depth*e_io "
    "+ h_i*w_i*(e_px/(n^2*3) + e_adc); trend-level reference only")


def baseline_energy(cfg: FPCAConfig, consts: CostConstants) -> float:
    """Reference energy of a conventional full-readout sensor (approximate)."""
    geom = derive_geometry(cfg)
    pixels = geom.in_height * geom.in_width
    io = pixels * 3 * consts.raw_bit_depth * consts.e_io
    per_pixel_read = consts.e_px / (cfg.max_kernel**2 * 3) + consts.e_adc
    return io + pixels * per_pixel_read


def sweep(base: FPCAConfig, strides, channel_counts, binnings,
          consts: CostConstants):
    """Full factorial sweep; invalid grid points are skipped and flagged.

    Returns (reports, skipped) with skipped entries of
    (stride, out_channels, binning, reason).
    """
    from dataclasses import replace

    reports: list[CostReport] = []
    skipped: list[tuple[int, int, int, str]] = []
    for binning in binnings:
        for stride in strides:
            for channels in channel_counts:
                cfg = replace(base, stride=stride, out_channels=channels,
                              binning=binning)
                violations = cfg.violations()
                if violations:
                    skipped.append((stride, channels, binning,
                                    "; ".join(violations)))
                    continue
                reports.append(report(cfg, consts))
    return reports, skipped


SWEEP_COLUMNS = ("S", "c_o", "binning", "n_c", "e_frontend_J", "e_io_J",
                 "t_frontend_s", "max_fps", "br")


def sweep_rows(reports) -> list[list]:
    return [[r.stride, r.out_channels, r.binning, r.n_cycles, r.e_frontend,
             r.e_io, r.t_frontend, r.max_fps, r.bandwidth_reduction]
            for r in reports]
