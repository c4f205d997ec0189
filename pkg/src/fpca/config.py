"""Array geometry and algorithm configuration, validation, and pixel binning.

All other modules consume a validated :class:`FPCAConfig` plus the
:class:`DerivedGeometry` computed from it.  Photodiode currents and stored
conductances are normalized, dimensionless values in [0, 1]; voltages scale
with ``v_max``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import (
    IndivisibleBinning,
    NonIntegralOutputDim,
    StrideExceedsKernel,
    ValidationError,
    ZeroDim,
)


@dataclass(frozen=True)
class FPCAConfig:
    """Input parameters of the pixel-convolution array.

    rows/cols are the physical pixel array dimensions; the effective input
    seen by the convolution is rows/binning x cols/binning.
    """

    rows: int                 # physical pixel rows (R_P)
    cols: int                 # physical pixel columns (C_P)
    max_kernel: int           # kernel footprint is max_kernel^2 x 3
    out_channels: int         # output channels stored in the weight block
    stride: int               # 1 .. max_kernel
    padding: int = 0          # zero-padding on each image edge
    binning: int = 1          # b x b mean pooling before compute; 1 = none
    adc_bits: int = 8
    skip_block: int = 8       # region-skip block edge length, pixels
    v_max: float = 1.0        # full-scale bitline voltage
    nvm_levels: int = 16      # uniform conductance quantization levels

    def violations(self) -> list[str]:
        """All invariant violations, empty when the config is valid."""
        out = []
        counts = {
            "rows": self.rows, "cols": self.cols, "max_kernel": self.max_kernel,
            "out_channels": self.out_channels, "stride": self.stride,
            "binning": self.binning, "adc_bits": self.adc_bits,
            "skip_block": self.skip_block,
        }
        for name, value in counts.items():
            if value < 1:
                out.append(f"ZeroDim: {name}={value} must be >= 1")
        if self.padding < 0:
            out.append(f"ZeroDim: padding={self.padding} must be >= 0")
        if self.v_max <= 0:
            out.append(f"ZeroDim: v_max={self.v_max} must be > 0")
        if self.nvm_levels < 2:
            out.append(f"ZeroDim: nvm_levels={self.nvm_levels} must be >= 2")
        if out:
            return out
        if self.stride > self.max_kernel:
            out.append(
                f"StrideExceedsKernel: stride={self.stride} > max_kernel={self.max_kernel}")
        if self.rows % self.binning or self.cols % self.binning:
            out.append(
                f"IndivisibleBinning: {self.rows}x{self.cols} not divisible by binning={self.binning}")
        if out:
            return out
        h_i, w_i = self.rows // self.binning, self.cols // self.binning
        span = self.max_kernel - 2 * self.padding
        for name, dim in (("rows", h_i), ("cols", w_i)):
            if dim < span:
                out.append(
                    f"ZeroDim: effective {name}={dim} smaller than kernel span {span}")
            elif (dim - self.max_kernel + 2 * self.padding) % self.stride:
                out.append(
                    f"NonIntegralOutputDim: ({dim} - {self.max_kernel} + "
                    f"2*{self.padding}) not divisible by stride {self.stride}")
        return out


# Raised exception class for the first matching violation message prefix.
_VIOLATION_CLASSES = {
    "ZeroDim": ZeroDim,
    "StrideExceedsKernel": StrideExceedsKernel,
    "IndivisibleBinning": IndivisibleBinning,
    "NonIntegralOutputDim": NonIntegralOutputDim,
}


def validate(cfg: FPCAConfig) -> FPCAConfig:
    """Check every config invariant; return the config unchanged if valid.

    Raises the specific error class for a single violation, or
    :class:`ValidationError` carrying the full list when several fail.
    """
    violations = cfg.violations()
    if not violations:
        return cfg
    if len(violations) == 1:
        prefix = violations[0].split(":", 1)[0]
        raise _VIOLATION_CLASSES[prefix](violations[0])
    raise ValidationError(violations)


@dataclass(frozen=True)
class DerivedGeometry:
    """Geometry implied by a valid config (all dims post-binning)."""

    in_height: int     # h_i
    in_width: int      # w_i
    out_height: int    # h_o
    out_width: int     # w_o
    colp_period: int   # column-pattern phases visited per output row

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def derive_geometry(cfg: FPCAConfig) -> DerivedGeometry:
    """Output map dims h_o = (h_i - n + 2p)/S + 1 and the ColP phase period."""
    validate(cfg)
    h_i = cfg.rows // cfg.binning
    w_i = cfg.cols // cfg.binning
    h_o = (h_i - cfg.max_kernel + 2 * cfg.padding) // cfg.stride + 1
    w_o = (w_i - cfg.max_kernel + 2 * cfg.padding) // cfg.stride + 1
    period = math.lcm(cfg.stride, cfg.max_kernel) // cfg.stride
    return DerivedGeometry(h_i, w_i, h_o, w_o, period)


def apply_binning(image: np.ndarray, binning: int) -> np.ndarray:
    """Mean-pool each binning x binning block per color channel."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected h x w x 3 image, got shape {image.shape}")
    if binning < 1:
        raise ZeroDim(f"binning={binning} must be >= 1")
    if binning == 1:
        return image
    h, w, _ = image.shape
    if h % binning or w % binning:
        raise IndivisibleBinning(
            f"{h}x{w} image not divisible by binning={binning}")
    blocks = image.reshape(h // binning, binning, w // binning, binning, 3)
    return blocks.mean(axis=(1, 3))


_REQUIRED_KEYS = ("rows", "cols", "max_kernel", "out_channels", "stride")
_ALL_KEYS = tuple(f.name for f in fields(FPCAConfig))


def config_from_dict(doc: dict) -> FPCAConfig:
    """Build a validated config from a JSON-style dict; unknown keys rejected."""
    unknown = sorted(set(doc) - set(_ALL_KEYS))
    if unknown:
        raise ValidationError([f"unknown config key: {k}" for k in unknown])
    missing = sorted(set(_REQUIRED_KEYS) - set(doc))
    if missing:
        raise ValidationError([f"missing config key: {k}" for k in missing])
    return validate(FPCAConfig(**doc))


def load_config(path) -> FPCAConfig:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValidationError(["config document must be a JSON object"])
    return config_from_dict(doc)
