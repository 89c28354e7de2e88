"""Exception hierarchy for the avaseg pipeline.

Everything raised on bad data derives from AvaError so callers (and the CLI)
can distinguish data problems from programming errors.
"""


class AvaError(Exception):
    """Base class for all pipeline data errors."""


class RasterFormatError(AvaError):
    """File is not an AVRS raster (bad magic, version, or dtype)."""


class CorruptFileError(AvaError):
    """AVRS file is structurally valid but truncated or inconsistent."""


class InvariantError(AvaError):
    """A domain object violates one of its declared invariants."""


class AlignmentError(AvaError):
    """Rasters that must share a grid do not."""


class DimensionError(AvaError):
    """Array or raster dimensions incompatible with the operation."""


class ValueRangeError(AvaError):
    """Sample values outside the range an operation requires."""


class DegenerateDatasetError(AvaError):
    """Dataset lacks the class structure needed to proceed (e.g. no positives)."""


class TrainingDivergedError(AvaError):
    """Loss became non-finite during optimization."""


class PlacementError(AvaError):
    """Synthetic generator could not place the requested number of debris regions."""
