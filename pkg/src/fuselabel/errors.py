"""Exception types shared across the pipeline."""


class FuseLabelError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(FuseLabelError):
    """Two rasters or a raster and its camera model disagree on size."""

    def __init__(self, layer: str, expected, actual):
        self.layer = layer
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        super().__init__(
            f"{layer}: expected dimensions {self.expected}, got {self.actual}"
        )


class FormatError(FuseLabelError):
    """A file or byte stream does not match its documented format."""


class ManifestError(FuseLabelError):
    """A manifest is malformed or references missing data."""


class MissingInputError(FuseLabelError):
    """A stage input required for the requested operation is absent."""

    def __init__(self, frame_id: str, field: str):
        self.frame_id = frame_id
        self.field = field
        super().__init__(f"frame {frame_id!r}: missing required input {field!r}")


class EmptyPromptError(FuseLabelError):
    """A box/centroid prompt selected no segments at all."""


class UndefinedMetricError(FuseLabelError):
    """A metric has an empty denominator (e.g. no class with nonzero union)."""


class EmptyGridError(FuseLabelError):
    """A grid query was issued against a grid with no populated cells."""


class NavigationError(FuseLabelError):
    """Navigability extraction or goal search failed structurally."""
