"""Exception hierarchy. Everything user-facing derives from TinyForgeError."""


class TinyForgeError(Exception):
    """Base class for all domain errors (CLI exit code 1)."""


class ConfigError(TinyForgeError):
    """Invalid or inconsistent configuration values."""


class ParseError(TinyForgeError):
    """Malformed input file; message names the offending line or byte."""


class UnsupportedFormatError(TinyForgeError):
    """File format recognized but not supported in this artifact."""


class DatasetError(TinyForgeError):
    """Dataset-level invariant violation (labels, splits, duplicates)."""


class DspError(TinyForgeError):
    """Signal does not meet the preprocessing block's requirements."""


class GraphError(TinyForgeError):
    """Model graph failed validation; message names the node or tensor."""


class ModelFormatError(TinyForgeError):
    """Model file unreadable: bad version, checksum, or structure."""


class TrainError(TinyForgeError):
    """Training could not proceed or diverged."""


class QuantError(TinyForgeError):
    """Quantization preconditions not met."""


class CodegenError(TinyForgeError):
    """Graph contains constructs the C emitter does not support."""


class EstimateError(TinyForgeError):
    """Resource estimation failed (unknown profile, missing shapes)."""


class TunerError(TinyForgeError):
    """Search-space or trial-batch failure."""


class CalibrationError(TinyForgeError):
    """Stream synthesis or GA search failure."""


class ProjectError(TinyForgeError):
    """Project directory missing, locked, or missing a prerequisite artifact."""
