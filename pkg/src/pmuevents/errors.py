"""Exception types shared across the package."""


class PmuEventsError(Exception):
    """Base class for all package errors."""


class DomainError(PmuEventsError, ValueError):
    """Input outside the mathematical domain of an operation."""


class FormatError(PmuEventsError, ValueError):
    """A file or byte stream violates its declared schema."""


class ContractError(PmuEventsError):
    """A caller violated an API contract (e.g. normalization mismatch)."""


class TrainingError(PmuEventsError):
    """GAN training failed; carries the epoch where it happened."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class IndeterminateImpedanceError(PmuEventsError):
    """|dI| below the current floor; equivalent impedance undefined."""


class InsufficientDataError(PmuEventsError):
    """Aligned coverage or steady-state data missing for an analysis."""


class SegmentationError(PmuEventsError):
    """Trace unsuitable for stage segmentation (e.g. too short)."""


class FitConvergenceError(PmuEventsError):
    """Curve fit did not converge; carries the last iterate."""

    def __init__(self, message, params=None, rmse=None, iterations=None):
        super().__init__(message)
        self.params = params
        self.rmse = rmse
        self.iterations = iterations


class FeatureError(PmuEventsError):
    """Event lacks the data needed to extract features."""


class ConfigError(PmuEventsError, ValueError):
    """Invalid scenario or command configuration."""
