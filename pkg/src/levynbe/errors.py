"""Exception types shared across the package."""


class LevyNbeError(Exception):
    """Base class for all package-specific errors."""


class GammaShapeUnderflow(LevyNbeError):
    """An intermediate gamma shape fell below the representable floor.

    Raised instead of silently returning denormal samples; callers may
    retry with a fresh random stream.
    """


class DualInfeasible(LevyNbeError):
    """The convex hull of the moment conditions excludes the origin."""


class InputLengthMismatch(LevyNbeError):
    """Dataset length does not match the estimator's fixed input length."""


class OutOfBox(LevyNbeError):
    """A parameter vector lies outside the required bounding box."""


class ModelMismatch(LevyNbeError):
    """Two objects refer to different models (or interval levels)."""


class EmptyInput(LevyNbeError):
    """An operation received an empty collection where data is required."""


class FormatVersionMismatch(LevyNbeError):
    """Artifact file uses an unsupported format version."""


class CorruptArtifact(LevyNbeError):
    """Artifact file failed integrity validation (checksum or structure)."""


class ParseError(LevyNbeError):
    """A data file row could not be parsed.

    Carries the 1-based row number, the column name, and a reason.
    """

    def __init__(self, row: int, column: str, reason: str):
        self.row = row
        self.column = column
        self.reason = reason
        super().__init__(f"row {row}, column {column!r}: {reason}")


class NonMonotoneTimestamps(LevyNbeError):
    """Timestamps are not strictly increasing."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"timestamps not strictly increasing at row {row}")


class NonPositivePrice(LevyNbeError):
    """A price entry is zero or negative."""

    def __init__(self, row: int, value: float):
        self.row = row
        self.value = value
        super().__init__(f"non-positive price {value} at row {row}")


class EmptyWindow(LevyNbeError):
    """A return window contains no observed increments."""


class ZeroScale(LevyNbeError):
    """A window has zero empirical standard deviation."""
