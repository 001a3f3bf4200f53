"""Exception types shared across the toolbox.

Every recoverable failure raises one of these so batch runs can record the
failure and keep going; anything else escaping a pipeline is a bug.
"""


class MovelabError(Exception):
    """Base class for all toolbox errors."""


class ParseError(MovelabError):
    """Malformed binary input. Carries the byte offset where parsing failed."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class SchemaError(MovelabError):
    """CSV/table input does not match the expected schema.

    Carries the source name and 1-based line number when known.
    """

    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where = f" [{source}" + (f", line {line}]" if line is not None else "]")
        elif line is not None:
            where = f" [line {line}]"
        super().__init__(message + where)


class ValidationError(MovelabError):
    """A value object or user selection violates its invariants."""


class WindowError(MovelabError):
    """A requested time window is empty, inverted, or outside the data."""


class ParameterError(MovelabError):
    """An analysis parameter is out of its valid range."""


class DesignError(ParameterError):
    """Digital filter design is infeasible (e.g. cutoff at/above Nyquist)."""


class DegenerateSpectrumError(MovelabError):
    """A spectrum has no power where power is required (e.g. median frequency of silence)."""


class DataError(MovelabError):
    """Input samples are unusable: non-finite values or gaps inside an analysis window."""


class GeometryError(MovelabError):
    """Degenerate geometry: collinear markers, zero-area triangle, zero quaternion."""


class CalibrationError(MovelabError):
    """Camera calibration failed: too few points, rank deficiency, ill-conditioning."""


class ReconstructionError(MovelabError):
    """Point reconstruction failed (singular system, horizon point, too few views)."""


class CoverageError(MovelabError):
    """A per-frame calibration series does not cover a frame that carries data."""


class UnstableWindowError(MovelabError):
    """Body-weight window is not quiet standing (std-dev too large)."""


class NoContactError(MovelabError):
    """No sustained threshold crossing found in a force trace."""


class InsufficientDataError(MovelabError):
    """Too few samples for a fit (e.g. stiffness loading phase)."""


class PathError(MovelabError):
    """A required path is missing or not writable."""


class EmptyBatchError(MovelabError):
    """Batch discovery matched zero files."""


class EmptyResultError(MovelabError):
    """An operation produced an empty result where data is required (e.g. sync shift)."""


class SyncLookupError(MovelabError):
    """A video name is absent from a sync table."""


class PlotError(MovelabError):
    """Plot emission got no drawable series."""
