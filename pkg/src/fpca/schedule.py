"""Cycle-by-cycle control program generation.

One cycle activates a single (channel, sign, ColP phase) for one output row.
Every output column whose horizontal start shares the cycle's phase is
computed in parallel: their receptive fields are disjoint (starts differ by
multiples of lcm(S, n) >= n), so each active pixel column routes to exactly
one kernel column.  Vertical placement is a cyclic rotation of the switch
matrix; horizontal placement is the ColP phase; RS/SW gating selects the
participating pixels.

With no region skipping and out_width >= colp_period the schedule length is
exactly 2 * out_height * out_channels * lcm(S, n) / S.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .config import DerivedGeometry, FPCAConfig, derive_geometry, validate
from .errors import InconsistentPhase
from .weights import SIGNS


def colp_sequence(stride: int, max_kernel: int) -> list[int]:
    """Column-pattern phases visited while striding: (k*S) mod n, all distinct."""
    period = math.lcm(stride, max_kernel) // stride
    return [(k * stride) % max_kernel for k in range(period)]


@dataclass(frozen=True)
class SwitchMatrixConfig:
    """Cyclic rotation mapping kernel rows onto the n SM lines."""

    rotation: int
    size: int

    def route(self, kernel_row: int) -> int:
        """SM line driven by the given kernel row."""
        return (kernel_row + self.rotation) % self.size


def switch_for_row(row_start: int, max_kernel: int) -> SwitchMatrixConfig:
    """Rotation delivering kernel row k to pixel row row_start + k.

    Pixel row r is hard-wired to SM line r mod n, so the matrix rotates by
    row_start mod n.
    """
    return SwitchMatrixConfig(rotation=row_start % max_kernel, size=max_kernel)


@dataclass(frozen=True)
class Cycle:
    """One control step: everything asserted on the array for one read."""

    index: int
    sign: str                    # "pos" | "neg"
    channel: int
    colp_phase: int
    out_row: int
    out_cols: tuple[int, ...]    # output columns computed this cycle
    rs_rows: tuple[int, ...]     # active pixel rows (in-bounds)
    sw_cols: tuple[int, ...]     # active pixel columns (in-bounds)
    switch: SwitchMatrixConfig

    @property
    def out_coords(self) -> list[tuple[int, int, int]]:
        return [(self.out_row, c, self.channel) for c in self.out_cols]


class RegionSkipMask:
    """Block-wise activity mask over the effective (post-binning) image.

    ``active[i, j]`` is True when block (i, j) participates in compute.  The
    grid is ceil(h_i / block) x ceil(w_i / block); edge blocks may be partial
    (``has_partial_blocks``).
    """

    def __init__(self, active: np.ndarray, block_size: int,
                 in_height: int, in_width: int):
        active = np.asarray(active, dtype=bool)
        expected = (-(-in_height // block_size), -(-in_width // block_size))
        if active.shape != expected:
            raise ValueError(
                f"mask grid {active.shape} != expected {expected} for "
                f"{in_height}x{in_width} image, block {block_size}")
        self.active = active
        self.block_size = block_size
        self.in_height = in_height
        self.in_width = in_width
        self.has_partial_blocks = (
            in_height % block_size != 0 or in_width % block_size != 0)

    @classmethod
    def all_active(cls, cfg: FPCAConfig) -> "RegionSkipMask":
        geom = derive_geometry(cfg)
        shape = (-(-geom.in_height // cfg.skip_block),
                 -(-geom.in_width // cfg.skip_block))
        return cls(np.ones(shape, dtype=bool), cfg.skip_block,
                   geom.in_height, geom.in_width)

    @property
    def storage_count(self) -> int:
        """SRAM bits needed: one per block."""
        return int(self.active.size)

    def pixel_active(self) -> np.ndarray:
        """Per-pixel activity map (in_height x in_width)."""
        expanded = np.repeat(np.repeat(self.active, self.block_size, axis=0),
                             self.block_size, axis=1)
        return expanded[:self.in_height, :self.in_width]

    def to_json(self) -> dict:
        return {"block_size": self.block_size,
                "active": self.active.astype(int).tolist()}

    @classmethod
    def from_json(cls, doc: dict, cfg: FPCAConfig) -> "RegionSkipMask":
        geom = derive_geometry(cfg)
        return cls(np.asarray(doc["active"], dtype=bool),
                   int(doc.get("block_size", cfg.skip_block)),
                   geom.in_height, geom.in_width)


@dataclass
class ControlSchedule:
    """Ordered cycles plus the map of outputs omitted by region skipping."""

    cycles: list[Cycle]
    geometry: DerivedGeometry
    skipped_outputs: np.ndarray = field(repr=False)  # (h_o, w_o) bool

    @property
    def n_cycles(self) -> int:
        return len(self.cycles)

    def to_json(self) -> dict:
        return {
            "n_cycles": self.n_cycles,
            "geometry": self.geometry.as_dict(),
            "skipped_outputs": self.skipped_outputs.astype(int).tolist(),
            "cycles": [
                {
                    "index": c.index, "sign": c.sign, "channel": c.channel,
                    "colp_phase": c.colp_phase, "rotation": c.switch.rotation,
                    "out_row": c.out_row, "out_cols": list(c.out_cols),
                    "rs_rows": list(c.rs_rows), "sw_cols": list(c.sw_cols),
                }
                for c in self.cycles
            ],
        }

    def trace_lines(self):
        """Human-readable trace, one line per cycle (golden-file format)."""
        for c in self.cycles:
            yield (f"{c.index:05d} {c.sign:<3s} ch={c.channel} "
                   f"phase={c.colp_phase} rot={c.switch.rotation} "
                   f"row={c.out_row} outs={_ranges(c.out_cols)} "
                   f"rs={_ranges(c.rs_rows)} sw={_ranges(c.sw_cols)}")

    def write_trace(self, path):
        with open(path, "w") as fh:
            for line in self.trace_lines():
                fh.write(line + "\n")

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")


def _ranges(indices) -> str:
    """Compress sorted indices to 'a-b,c,d-e' notation."""
    if not indices:
        return "-"
    parts = []
    start = prev = indices[0]
    for idx in indices[1:]:
        if idx == prev + 1:
            prev = idx
            continue
        parts.append(f"{start}-{prev}" if prev > start else f"{start}")
        start = prev = idx
    parts.append(f"{start}-{prev}" if prev > start else f"{start}")
    return ",".join(parts)


def _skipped_output_map(cfg: FPCAConfig, geom: DerivedGeometry,
                        mask: RegionSkipMask) -> np.ndarray:
    """True where an output's whole in-bounds receptive field is inactive.

    Outputs whose field straddles active and skipped blocks stay computed.
    """
    if mask.active.all():
        return np.zeros((geom.out_height, geom.out_width), dtype=bool)
    act = mask.pixel_active()
    # summed-area table for O(1) any-active queries over clipped windows
    sat = np.zeros((geom.in_height + 1, geom.in_width + 1), dtype=np.int64)
    sat[1:, 1:] = np.cumsum(np.cumsum(act.astype(np.int64), 0), 1)
    n, s, p = cfg.max_kernel, cfg.stride, cfg.padding
    r_lo = np.clip(np.arange(geom.out_height) * s - p, 0, geom.in_height)
    r_hi = np.clip(np.arange(geom.out_height) * s - p + n, 0, geom.in_height)
    c_lo = np.clip(np.arange(geom.out_width) * s - p, 0, geom.in_width)
    c_hi = np.clip(np.arange(geom.out_width) * s - p + n, 0, geom.in_width)
    counts = (sat[r_hi[:, None], c_hi[None, :]] - sat[r_lo[:, None], c_hi[None, :]]
              - sat[r_hi[:, None], c_lo[None, :]] + sat[r_lo[:, None], c_lo[None, :]])
    return counts == 0


def enumerate_schedule(cfg: FPCAConfig,
                       mask: RegionSkipMask | None = None) -> ControlSchedule:
    """Generate the full deterministic control program.

    Ordering: output row, then channel, then sign (pos before neg), with the
    ColP phases innermost.  Cycles whose outputs all fall in skipped blocks
    are omitted; phases no output column maps to (possible only when
    out_width < colp_period) never produce a cycle.
    """
    validate(cfg)
    geom = derive_geometry(cfg)
    if mask is None:
        mask = RegionSkipMask.all_active(cfg)
    skipped = _skipped_output_map(cfg, geom, mask)

    n, s, p = cfg.max_kernel, cfg.stride, cfg.padding
    # phase -> output columns, identical for every row; first-seen order
    phase_groups: dict[int, list[int]] = {}
    for x in range(geom.out_width):
        phase_groups.setdefault((x * s - p) % n, []).append(x)

    cycles: list[Cycle] = []
    index = 0
    for out_row in range(geom.out_height):
        r0 = out_row * s - p
        switch = switch_for_row(r0, n)
        rs_rows = tuple(range(max(0, r0), min(geom.in_height, r0 + n)))
        # per-phase column sets survive unchanged across channels and signs
        row_groups = []
        for phase, xs in phase_groups.items():
            live = [x for x in xs if not skipped[out_row, x]]
            if not live:
                continue
            sw = set()
            for x in live:
                c0 = x * s - p
                sw.update(range(max(0, c0), min(geom.in_width, c0 + n)))
            row_groups.append((phase, tuple(live), tuple(sorted(sw))))
        for channel in range(cfg.out_channels):
            for sign in SIGNS:
                for phase, out_cols, sw_cols in row_groups:
                    cycles.append(Cycle(
                        index=index, sign=sign, channel=channel,
                        colp_phase=phase, out_row=out_row, out_cols=out_cols,
                        rs_rows=rs_rows, sw_cols=sw_cols, switch=switch))
                    index += 1
    return ControlSchedule(cycles=cycles, geometry=geom,
                           skipped_outputs=skipped)


def pixel_weight_map(cycle: Cycle, cfg: FPCAConfig) -> dict:
    """(pixel row, pixel col) -> (kernel i, kernel j) for one cycle.

    Well defined because the receptive fields inside a cycle are disjoint.
    Out-of-bounds (padding) positions carry no physical pixel and are absent.
    """
    geom = derive_geometry(cfg)
    n, s, p = cfg.max_kernel, cfg.stride, cfg.padding
    r0 = cycle.out_row * s - p
    if cycle.switch.rotation != r0 % n:
        raise InconsistentPhase(
            f"switch rotation {cycle.switch.rotation} != row start {r0} mod {n}")
    mapping = {}
    for x in cycle.out_cols:
        c0 = x * s - p
        if c0 % n != cycle.colp_phase:
            raise InconsistentPhase(
                f"output col {x} has phase {c0 % n}, cycle says {cycle.colp_phase}")
        for i in range(n):
            pr = r0 + i
            if not 0 <= pr < geom.in_height:
                continue
            for j in range(n):
                pc = c0 + j
                if 0 <= pc < geom.in_width:
                    mapping[(pr, pc)] = (i, j)
    return mapping


@dataclass
class CoverageReport:
    """Pos/neg production counts per output coordinate."""

    pos_counts: np.ndarray  # (h_o, w_o, c_o)
    neg_counts: np.ndarray

    @property
    def gaps(self) -> list[tuple[int, int, int, str]]:
        out = []
        for sign, counts in (("pos", self.pos_counts), ("neg", self.neg_counts)):
            for r, c, ch in zip(*np.nonzero(counts == 0)):
                out.append((int(r), int(c), int(ch), sign))
        return out

    @property
    def duplicates(self) -> list[tuple[int, int, int, str]]:
        out = []
        for sign, counts in (("pos", self.pos_counts), ("neg", self.neg_counts)):
            for r, c, ch in zip(*np.nonzero(counts > 1)):
                out.append((int(r), int(c), int(ch), sign))
        return out

    @property
    def is_complete(self) -> bool:
        return bool((self.pos_counts == 1).all() and (self.neg_counts == 1).all())


def coverage_check(schedule: ControlSchedule, cfg: FPCAConfig) -> CoverageReport:
    """Count how many pos and neg cycles produce each output coordinate."""
    geom = schedule.geometry
    shape = (geom.out_height, geom.out_width, cfg.out_channels)
    pos = np.zeros(shape, dtype=np.int64)
    neg = np.zeros(shape, dtype=np.int64)
    for cycle in schedule.cycles:
        counts = pos if cycle.sign == "pos" else neg
        for x in cycle.out_cols:
            counts[cycle.out_row, x, cycle.channel] += 1
    return CoverageReport(pos_counts=pos, neg_counts=neg)
