"""Exception types shared across the package."""


class BwareError(Exception):
    """Base class for all package errors."""


class ValidationError(BwareError):
    """Bad user input: specs, shapes, ranges, pipeline scripts."""


class ShapeError(ValidationError):
    """Operand dimensions do not line up."""


class CardinalityError(ValidationError):
    """More distinct values than the widest map encoding supports."""


class CsvFormatError(ValidationError):
    """Malformed CSV input (ragged rows etc.)."""


class SpecError(ValidationError):
    """Invalid transformation spec."""


class UnseenValueError(ValidationError):
    """Apply-time value that was not present during fit."""

    def __init__(self, column: int, values):
        self.column = column
        self.values = list(values)
        shown = ", ".join(repr(v) for v in self.values[:10])
        more = "" if len(self.values) <= 10 else f" (+{len(self.values) - 10} more)"
        super().__init__(f"column {column}: unseen values during apply: {shown}{more}")


class PlanError(ValidationError):
    """Morph plan requests an inadmissible encoding change."""


class PipelineError(BwareError):
    """Pipeline parse or runtime failure, tagged with a node/line."""


class FormatError(BwareError):
    """Corrupt or unsupported tiled binary file."""


class ManifestError(FormatError):
    """Tiled manifest references missing or inconsistent partitions."""
