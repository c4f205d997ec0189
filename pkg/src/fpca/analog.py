"""Analog bitline evaluation and the up/down-counting ADC.

Device models map N (current, weight) contributions to one bitline voltage
in [0, v_max] and are monotone nondecreasing in every input.  Positive- and
negative-plane voltages for the same output are combined by correlated
double sampling in the ADC counter: up-count on pos, down-count on neg,
with the batch-norm offset preloaded and the floor clamp acting as ReLU.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _backend
from .config import FPCAConfig, derive_geometry, validate
from .errors import EmptyContributionSet, VoltageOutOfRange
from .schedule import RegionSkipMask, enumerate_schedule
from .surrogate import SurrogateModel
from .weights import WeightBlock

_V_TOL = 1e-9  # accepted float slack on voltage range checks, x v_max


class Contribution(NamedTuple):
    """One activated pixel: normalized photodiode current and conductance."""

    current: float
    weight: float


class DeviceModel:
    """Maps batches of contribution vectors (..., N) to voltages (...)."""

    v_max: float = 1.0
    params: dict = {}

    def evaluate(self, currents, weights):
        raise NotImplementedError


class IdealLinear(DeviceModel):
    """v = v_max * mean(I * W); the 1/N scaling keeps any kernel in range."""

    def __init__(self, v_max: float = 1.0):
        self.v_max = v_max
        self.params = {"v_max": v_max}

    def evaluate(self, currents, weights):
        currents = np.asarray(currents, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        return self.v_max * (currents * weights).mean(axis=-1)


class SaturatingOracle(DeviceModel):
    """Synthetic nonlinear bitline with two coupled saturation mechanisms.

    Per pixel, s = IW / (1 + beta*IW) compresses strong contributions; the
    accumulated drive then loads the line, v = v_max * D / (D + kappa*N)
    with D = sum(s).  Each pixel's effect thus depends on the cumulative
    state of the others, the regime the bucket-select model targets.
    """

    def __init__(self, v_max: float = 1.0, kappa: float = 0.5,
                 beta: float = 0.3):
        self.v_max = v_max
        self.kappa = kappa
        self.beta = beta
        self.params = {"v_max": v_max, "kappa": kappa, "beta": beta}

    def evaluate(self, currents, weights):
        currents = np.asarray(currents, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        t = currents * weights
        s = t / (1.0 + self.beta * t)
        drive = s.sum(axis=-1)
        return self.v_max * drive / (drive + self.kappa * currents.shape[-1])


class SurrogateDevice(DeviceModel):
    """Fitted bucket-select model standing in for the bitline."""

    def __init__(self, model: SurrogateModel, predictor: str = "sigmoid"):
        if predictor not in ("sigmoid", "step"):
            raise ValueError(f"predictor must be sigmoid|step, got {predictor!r}")
        self.model = model
        self.predictor = predictor
        self.v_max = model.v_max
        self.params = {"predictor": predictor, "pixel_count": model.pixel_count}

    def evaluate(self, currents, weights):
        predict = (self.model.predict_sigmoid if self.predictor == "sigmoid"
                   else self.model.predict_step)
        out = predict(currents, weights)
        return np.clip(out, 0.0, self.v_max)


def bitline(contributions, model: DeviceModel) -> float:
    """Voltage for one set of simultaneously activated pixels."""
    contributions = list(contributions)
    if not contributions:
        raise EmptyContributionSet("bitline needs at least one contribution")
    currents = np.array([c[0] for c in contributions], dtype=np.float64)
    weights = np.array([c[1] for c in contributions], dtype=np.float64)
    return float(model.evaluate(currents, weights))


@dataclass(frozen=True)
class AdcSpec:
    """Single-slope ADC behavior: counter range and BN offset preload.

    The BN scale term is not represented here; it must be folded into the
    kernel weights before programming.
    """

    bits: int
    v_max: float
    bn_offset: int = 0


def adc_convert(v_pos, v_neg, spec: AdcSpec):
    """CDS count: round(pos) - round(neg) + offset, clamped to the code range.

    The lower clamp at zero implements ReLU.  Rounding is half-up.
    """
    v_pos = np.asarray(v_pos, dtype=np.float64)
    v_neg = np.asarray(v_neg, dtype=np.float64)
    slack = _V_TOL * spec.v_max
    for name, v in (("pos", v_pos), ("neg", v_neg)):
        if np.any(v < -slack) or np.any(v > spec.v_max + slack):
            raise VoltageOutOfRange(
                f"{name} voltage outside [0, {spec.v_max}]")
    full = 2**spec.bits - 1
    scale = full / spec.v_max
    code_pos = np.floor(np.clip(v_pos, 0.0, spec.v_max) * scale + 0.5)
    code_neg = np.floor(np.clip(v_neg, 0.0, spec.v_max) * scale + 0.5)
    raw = code_pos - code_neg + spec.bn_offset
    out = np.clip(raw, 0, full).astype(np.int64)
    return out if out.ndim else int(out)


def _cycle_voltages(padded, plane, row_starts, col_starts, model):
    if isinstance(model, IdealLinear):
        return _backend.bitline_eval(padded, plane, row_starts, col_starts,
                                     _backend.KIND_LINEAR, model.v_max)
    if isinstance(model, SaturatingOracle):
        return _backend.bitline_eval(padded, plane, row_starts, col_starts,
                                     _backend.KIND_SATURATING, model.v_max,
                                     model.kappa, model.beta)
    patches = _backend.gather_patches(
        np.ascontiguousarray(padded), plane.shape[0],
        np.asarray(row_starts, dtype=np.intp),
        np.asarray(col_starts, dtype=np.intp))
    batch = patches.reshape(patches.shape[0], -1)
    return np.atleast_1d(model.evaluate(
        batch, np.broadcast_to(plane.reshape(-1), batch.shape)))


def run_frame(image, block: WeightBlock, cfg: FPCAConfig, model: DeviceModel,
              mask: RegionSkipMask | None = None,
              bn_offset: int = 0) -> np.ndarray:
    """Execute a full frame; returns activation counts (h_o, w_o, c_o).

    The image must already be binned to the effective dims and normalized to
    [0, 1].  Every cycle of the control schedule contributes the voltages of
    its output coordinates; pos/neg pairs per output are combined in the ADC.
    Outputs omitted by region skipping are exact zeros.
    """
    validate(cfg)
    geom = derive_geometry(cfg)
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (geom.in_height, geom.in_width, 3):
        raise ValueError(
            f"image shape {image.shape} != effective dims "
            f"({geom.in_height}, {geom.in_width}, 3)")
    if np.any(image < 0.0) or np.any(image > 1.0):
        raise ValueError("image currents must be normalized to [0, 1]")
    if block.max_kernel != cfg.max_kernel or block.out_channels != cfg.out_channels:
        raise ValueError("weight block geometry does not match config")

    schedule = enumerate_schedule(cfg, mask)
    pad = cfg.padding
    padded = np.pad(image, ((pad, pad), (pad, pad), (0, 0)))
    v_planes = {
        "pos": np.zeros((geom.out_height, geom.out_width, cfg.out_channels)),
        "neg": np.zeros((geom.out_height, geom.out_width, cfg.out_channels)),
    }

    # Batch all receptive fields of one (channel, sign) into a single kernel
    # call; in padded coordinates the window start of output (r, x) is
    # (r*S, x*S), always in bounds.
    groups: dict[tuple[int, str], list[tuple[int, int]]] = {}
    for cycle in schedule.cycles:
        outs = groups.setdefault((cycle.channel, cycle.sign), [])
        outs.extend((cycle.out_row, x) for x in cycle.out_cols)
    stride = cfg.stride
    for (channel, sign), outs in groups.items():
        coords = np.asarray(outs, dtype=np.intp)
        voltages = _cycle_voltages(padded, block.select(channel, sign),
                                   coords[:, 0] * stride, coords[:, 1] * stride,
                                   model)
        v_planes[sign][coords[:, 0], coords[:, 1], channel] = voltages

    spec = AdcSpec(bits=cfg.adc_bits, v_max=cfg.v_max, bn_offset=bn_offset)
    counts = adc_convert(v_planes["pos"], v_planes["neg"], spec)
    counts[schedule.skipped_outputs, :] = 0
    return counts
