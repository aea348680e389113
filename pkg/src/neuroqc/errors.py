"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: anything derived from ``DataError``
is a data problem (exit 2), OS-level failures stay as ``OSError`` (exit 3).
"""


class NeuroQcError(Exception):
    """Base class for all toolkit errors."""


class DataError(NeuroQcError):
    """Input data is malformed or violates an invariant."""


class SwcParseError(DataError):
    """A line of SWC text could not be parsed.

    Carries the 1-based line number of the offending line.
    """

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class SwcValidationError(DataError):
    """A parsed reconstruction violates a structural invariant."""


class VolumeFormatError(DataError):
    """A volume file or its sidecar is inconsistent or unsupported."""


class DatasetFormatError(DataError):
    """A patch dataset file is corrupt, truncated or of a wrong version."""
