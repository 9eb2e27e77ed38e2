"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 3,
file-format and I/O problems exit 4, analysis-domain problems exit 5.
"""


class TripletSimError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TripletSimError):
    """Invalid configuration value, key, or parameter combination."""


class FormatError(TripletSimError):
    """Malformed binary or text artifact.

    ``byte_offset`` points at the first offending byte when known.
    """

    def __init__(self, message, byte_offset=None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class AnalysisError(TripletSimError):
    """Analysis-domain failure, e.g. an undefined correlation."""
