"""Shared per-column weight storage.

A signed kernel is decomposed into disjoint nonnegative pos/neg planes, each
quantized to the NVM conductance levels.  One :class:`WeightBlock` holds the
planes of every output channel; a single (channel, sign) plane is active per
cycle via the channel-select lines.
"""

from __future__ import annotations

import numpy as np

from .config import FPCAConfig
from .errors import (
    ChannelCountMismatch,
    ChannelOutOfRange,
    KernelTooLarge,
    OutOfRangeWeight,
)

SIGNS = ("pos", "neg")


def _as_kernel(values) -> np.ndarray:
    kernel = np.asarray(values, dtype=np.float64)
    if kernel.ndim != 3 or kernel.shape[2] != 3 or kernel.shape[0] != kernel.shape[1]:
        raise ValueError(f"expected k x k x 3 kernel, got shape {kernel.shape}")
    return kernel


def split_signed(kernel) -> tuple[np.ndarray, np.ndarray]:
    """Split into (pos, neg) nonnegative planes with pos - neg == kernel.

    At most one of pos/neg is nonzero per position (disjoint support).
    """
    kernel = _as_kernel(kernel)
    if np.any(np.abs(kernel) > 1.0):
        worst = float(np.max(np.abs(kernel)))
        raise OutOfRangeWeight(f"kernel magnitude {worst} exceeds 1.0")
    return np.maximum(kernel, 0.0), np.maximum(-kernel, 0.0)


def pad_to_max(kernel, max_kernel: int) -> np.ndarray:
    """Zero-extend a k x k x 3 kernel to max_kernel^2 x 3, values at top-left."""
    kernel = _as_kernel(kernel)
    size = kernel.shape[0]
    if size > max_kernel:
        raise KernelTooLarge(f"kernel {size} exceeds max_kernel {max_kernel}")
    if size == max_kernel:
        return kernel
    padded = np.zeros((max_kernel, max_kernel, 3), dtype=np.float64)
    padded[:size, :size, :] = kernel
    return padded


def quantize(weights, nvm_levels: int):
    """Snap conductances in [0, 1] to the nearest of nvm_levels uniform levels.

    Ties round up (toward the higher conductance).
    """
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise OutOfRangeWeight("conductance outside [0, 1]")
    steps = nvm_levels - 1
    levels = np.clip(np.floor(w * steps + 0.5), 0, steps)
    quantized = levels / steps
    return float(quantized) if np.isscalar(weights) else quantized


class WeightBlock:
    """Quantized pos/neg planes for all channels of one pixel column.

    Write-once: build via :meth:`program`, then read concurrently via
    :meth:`select`.
    """

    def __init__(self, planes: np.ndarray, nvm_levels: int):
        # planes: (out_channels, 2, n, n, 3); index 0 = pos, 1 = neg
        self.planes = planes
        self.nvm_levels = nvm_levels
        self.out_channels = planes.shape[0]
        self.max_kernel = planes.shape[2]

    @classmethod
    def program(cls, kernels, cfg: FPCAConfig) -> "WeightBlock":
        """Split, quantize, and store one padded n x n x 3 kernel per channel."""
        kernels = [_as_kernel(k) for k in kernels]
        if len(kernels) != cfg.out_channels:
            raise ChannelCountMismatch(
                f"got {len(kernels)} kernels for {cfg.out_channels} channels")
        n = cfg.max_kernel
        planes = np.zeros((cfg.out_channels, 2, n, n, 3), dtype=np.float64)
        for ch, kernel in enumerate(kernels):
            if kernel.shape[0] != n:
                raise KernelTooLarge(
                    f"channel {ch}: kernel {kernel.shape[0]} != max_kernel {n}; "
                    "pad_to_max before programming")
            pos, neg = split_signed(kernel)
            planes[ch, 0] = quantize(pos, cfg.nvm_levels)
            planes[ch, 1] = quantize(neg, cfg.nvm_levels)
        return cls(planes, cfg.nvm_levels)

    def select(self, channel: int, sign: str) -> np.ndarray:
        """Active n x n x 3 conductance plane for one (channel, sign)."""
        if not 0 <= channel < self.out_channels:
            raise ChannelOutOfRange(
                f"channel {channel} not in [0, {self.out_channels})")
        if sign not in SIGNS:
            raise ValueError(f"sign must be one of {SIGNS}, got {sign!r}")
        return self.planes[channel, SIGNS.index(sign)]

    def signed_plane(self, channel: int) -> np.ndarray:
        """Quantized pos - neg reconstruction for one channel."""
        return self.select(channel, "pos") - self.select(channel, "neg")

    @property
    def weights_per_column(self) -> int:
        """Stored NVM count: 2 * n^2 * 3 * out_channels."""
        return int(np.prod(self.planes.shape))

    def dump(self) -> dict:
        """Full quantized layout for inspection/serialization."""
        return {
            "out_channels": self.out_channels,
            "max_kernel": self.max_kernel,
            "nvm_levels": self.nvm_levels,
            "weights_per_column": self.weights_per_column,
            "planes": {
                f"ch{ch}_{sign}": self.planes[ch, s].tolist()
                for ch in range(self.out_channels)
                for s, sign in enumerate(SIGNS)
            },
        }
