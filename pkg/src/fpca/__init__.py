"""Behavioral simulator and modeling toolkit for a reconfigurable in-pixel
convolution array: cycle-level dataflow scheduling, analog bitline device
models with an up/down-counting ADC, bucket-select curvefit surrogates with
analytic gradients, and analytical energy/latency/bandwidth cost models.
"""

from ._backend import BACKEND
from .analog import (
    AdcSpec,
    Contribution,
    DeviceModel,
    IdealLinear,
    SaturatingOracle,
    SurrogateDevice,
    adc_convert,
    bitline,
    run_frame,
)
from .config import (
    DerivedGeometry,
    FPCAConfig,
    apply_binning,
    config_from_dict,
    derive_geometry,
    load_config,
    validate,
)
from .cost import CostConstants, CostReport, bandwidth_reduction, cycle_count, energy, latency, report, sweep
from .schedule import (
    ControlSchedule,
    Cycle,
    RegionSkipMask,
    SwitchMatrixConfig,
    colp_sequence,
    coverage_check,
    enumerate_schedule,
    pixel_weight_map,
    switch_for_row,
)
from .surrogate import (
    BucketModel,
    Surface2D,
    SurrogateModel,
    error_report,
    find_anchor,
    fit_bucket,
    fit_generic,
    fit_surrogate,
)
from .weights import WeightBlock, pad_to_max, quantize, split_signed

__version__ = "0.1.0"
