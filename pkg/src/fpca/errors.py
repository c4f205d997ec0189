"""Exception types raised across the package.

The class names mirror the error categories of the module contracts so that
callers can catch a specific failure mode without string matching.
"""


class FPCAError(Exception):
    """Base class for all package errors."""


class ConfigError(FPCAError):
    """Base class for configuration/validation failures."""


class ZeroDim(ConfigError):
    """A count field that must be positive is zero or negative."""


class StrideExceedsKernel(ConfigError):
    """Stride larger than the maximum kernel width."""


class NonIntegralOutputDim(ConfigError):
    """(h_i - n + 2p) is not divisible by the stride; output grid ill-defined."""


class IndivisibleBinning(ConfigError):
    """Physical array dims not divisible by the binning factor."""


class ValidationError(ConfigError):
    """Aggregate of one or more violations (carries the full list)."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class OutOfRangeWeight(FPCAError):
    """Kernel weight outside [-1, 1] or conductance outside [0, 1]."""


class KernelTooLarge(FPCAError):
    """Kernel spatial size exceeds the configured maximum."""


class ChannelCountMismatch(FPCAError):
    """Number of kernels does not match the configured output channels."""


class ChannelOutOfRange(FPCAError):
    """Channel index >= configured output channel count."""


class InconsistentPhase(FPCAError):
    """A cycle's output coordinates disagree with its column-pattern phase."""


class EmptyContributionSet(FPCAError):
    """Bitline evaluated with no activated pixels."""


class VoltageOutOfRange(FPCAError):
    """ADC input voltage outside [0, v_max]."""


class SingularFit(FPCAError):
    """Rank-deficient least-squares system during surface fitting."""


class UnreachableBucket(FPCAError):
    """Oracle output range cannot reach the requested bucket center."""


class EstimateOutOfRange(FPCAError):
    """Step-1 output estimate outside [0, v_max] beyond clamping tolerance."""
