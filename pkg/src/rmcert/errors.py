"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`RmcertError`,
so the CLI can map them to a JSON error record and a nonzero exit code.
"""


class RmcertError(Exception):
    """Base class for all package errors."""

    kind = "error"

    def to_dict(self):
        return {"error": self.kind, "message": str(self)}


class DimensionError(RmcertError, ValueError):
    kind = "invalid-dimension"


class ShapeError(RmcertError, ValueError):
    kind = "shape"


class NumericError(RmcertError, ArithmeticError):
    kind = "numeric"


class DomainError(RmcertError, ValueError):
    kind = "domain"


class EmptyDataError(RmcertError, ValueError):
    kind = "empty-data"


class ObservableError(RmcertError, ValueError):
    kind = "observable"


class CalibrationError(RmcertError, ValueError):
    kind = "calibration"


class UnsupportedDimensionError(RmcertError, ValueError):
    kind = "unsupported-dimension"


class DegenerateGaugeError(RmcertError, ValueError):
    kind = "degenerate-gauge"


class ValidationError(RmcertError, ValueError):
    """A loaded object failed a physical invariant (unitarity, positivity, ...)."""

    kind = "validation"

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record

    def to_dict(self):
        out = super().to_dict()
        if self.record is not None:
            out["record"] = self.record
        return out


class SchemaError(RmcertError, ValueError):
    """Malformed input file. ``location`` is a JSON path or ``line:col``."""

    kind = "parse"

    def __init__(self, message, location=None):
        super().__init__(message if location is None else f"{location}: {message}")
        self.location = location

    def to_dict(self):
        out = super().to_dict()
        if self.location is not None:
            out["location"] = self.location
        return out


class StageError(RmcertError):
    """Wraps an error raised inside a pipeline stage."""

    kind = "stage"

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause

    def to_dict(self):
        out = super().to_dict()
        out["stage"] = self.stage
        if isinstance(self.cause, RmcertError):
            out["cause"] = self.cause.to_dict()
        else:
            out["cause"] = {"error": type(self.cause).__name__, "message": str(self.cause)}
        return out
