"""Exception types raised across the package.

Degenerate inputs always surface as typed errors rather than silent NaN,
so downstream code can distinguish "no data" from "model broke".
"""


class HookrateError(Exception):
    """Base class for all package errors."""


class DataValidationError(HookrateError):
    """A record or file violates an invariant (bad counts, bad header, ...)."""

    def __init__(self, message, set_id=None, row=None):
        if set_id is not None:
            message = f"set {set_id!r}: {message}"
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.set_id = set_id
        self.row = row


class SoakSpreadError(HookrateError):
    """Soak times are too heterogeneous to pool; use the numeric fit instead."""


class HeterogeneousDataError(HookrateError):
    """Sets differ in soak time or hook count where a closed form needs them equal."""


class EstimationError(HookrateError):
    """An estimator cannot produce a finite, meaningful result."""


class SaturationError(EstimationError):
    """Every hook came back unbaited; the overall rate is unbounded."""


class DegenerateDataError(EstimationError):
    """Counts make the requested estimator undefined (e.g. no hooks touched)."""


class BootstrapError(HookrateError):
    """Too many degenerate bootstrap replicates to form an interval."""
