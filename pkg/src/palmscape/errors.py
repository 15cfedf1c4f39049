"""Exception hierarchy for the palmscape toolkit.

Every error raised by the library derives from :class:`PalmscapeError`, so
callers (notably the CLI) can distinguish domain failures from genuine bugs.
"""


class PalmscapeError(Exception):
    """Base class for all palmscape errors."""


# geometry / projection

class OutOfProjectionRange(PalmscapeError):
    """Point too far from the local projection origin (> 100 km)."""


class OutsideGrid(PalmscapeError):
    """Point falls outside the extent of a grid specification."""


class DegenerateHull(PalmscapeError):
    """Fewer than three non-collinear points, or a zero-area polygon."""


class EmptySet(PalmscapeError):
    """An operation that needs at least one element got none."""


# ingest

class ParseError(PalmscapeError):
    """Malformed input document; message carries file and offset."""


class GeometryMismatch(PalmscapeError):
    """Feature geometry type differs from what the caller expected."""


class ValidationError(PalmscapeError):
    """Geometry or property fails a validity check (range, ring closure)."""


class MissingConfidence(PalmscapeError):
    """Detection feature lacks a confidence property but one is required."""


class MissingColumn(PalmscapeError):
    """Required column absent from a delimited table."""


class EmptyTable(PalmscapeError):
    """Delimited table contains a header but no data rows."""


# spatial index / clustering

class EmptyInput(PalmscapeError):
    """No points supplied where at least one is required."""


class MixedOrigins(PalmscapeError):
    """Local coordinates from different projection origins were mixed."""


class TooFewPoints(PalmscapeError):
    """Fewer points than the neighbourhood size requires."""


# sampling / statistics

class InfeasibleRegion(PalmscapeError):
    """Rejection sampling could not find admissible points."""


class LengthMismatch(PalmscapeError):
    """Paired vectors have different lengths."""


class DegenerateInput(PalmscapeError):
    """Statistic undefined for the given input (e.g. constant vector)."""


class TooFewGroups(PalmscapeError):
    """A k-sample test needs at least two groups."""


class TooFewValues(PalmscapeError):
    """Not enough observations for the requested statistic."""


# raster

class BadFilename(PalmscapeError):
    """Elevation tile filename does not encode a corner coordinate."""


class BadSize(PalmscapeError):
    """Elevation tile file has an unexpected byte size."""


class NoCoverage(PalmscapeError):
    """No loaded tile covers the queried coordinate."""


class VoidCell(PalmscapeError):
    """Sampling would touch a void (no-data) elevation post."""
