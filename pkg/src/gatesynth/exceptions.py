"""Exception types shared across the package.

Every failure mode that callers are expected to handle gets its own class so
tests and the CLI can distinguish usage errors from runtime failures.
"""


class GatesynthError(Exception):
    """Base class for all package errors."""


class ConfigError(GatesynthError):
    """Invalid run configuration or command-line usage."""


# -- dataset / schema ---------------------------------------------------------

class DataError(GatesynthError):
    pass


class ConstantColumnError(DataError):
    """A feature column has zero variance and cannot be standardized."""

    def __init__(self, name: str):
        super().__init__(f"feature {name!r} is constant (zero variance)")
        self.name = name


class TooFewRowsError(DataError):
    pass


class SchemaMismatchError(DataError):
    pass


class HeaderMismatchError(DataError):
    """CSV header does not match any known circuit schema."""


class NonNumericCellError(DataError):
    def __init__(self, row: int, col: int, text: str):
        super().__init__(f"non-numeric cell {text!r} at row {row}, column {col}")
        self.row = row
        self.col = col


class IoFailure(GatesynthError):
    pass


# -- simulator ----------------------------------------------------------------

class DegenerateSamplerError(GatesynthError):
    """Gaussian resampling failed to produce a positive draw within the bound."""


class NonconductingDeviceError(GatesynthError):
    """Supply voltage at or below effective threshold: no drive current."""


class OracleDomainError(GatesynthError):
    """Delay formula undefined: nonpositive geometry, doping or load."""


# -- neural substrate ---------------------------------------------------------

class ShapeMismatchError(GatesynthError):
    pass


class BatchTooSmallError(GatesynthError):
    """Train-mode forward needs >= 2 rows for batch statistics."""


class NoCachedForwardError(GatesynthError):
    """backward() called without a preceding train-mode forward()."""


# -- diffusion ----------------------------------------------------------------

class InvalidRangeError(GatesynthError):
    pass


class StepOutOfRangeError(GatesynthError):
    pass


class NonFiniteLossError(GatesynthError):
    """Training loss diverged; consider reducing the learning rate."""


class UntrainedModelError(GatesynthError):
    pass


# -- metrics / benchmark ------------------------------------------------------

class ZeroReferenceError(GatesynthError):
    """MAPE is undefined when a reference value is zero."""


class LengthMismatchError(GatesynthError):
    pass


class EmptySampleError(GatesynthError):
    pass


class LeakageDetectedError(GatesynthError):
    """Identical row present in both train and test sets."""
