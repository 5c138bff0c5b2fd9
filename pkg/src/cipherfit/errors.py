"""Exception hierarchy shared across the package.

Each CLI-facing failure class maps to a distinct exit code; see cli.py.
"""


class CipherfitError(Exception):
    """Base class for all library errors."""


class ParameterError(CipherfitError):
    """Invalid or inconsistent scheme parameters."""


class CapacityError(CipherfitError):
    """More values than slots, or a matrix that does not fit its layout."""


class LayoutError(CipherfitError):
    """Tile layout mismatch between operands."""


class DimensionError(CipherfitError):
    """Matrix shapes incompatible with the requested product."""


class DepthExhaustedError(CipherfitError):
    """Not enough levels left for the requested operation."""

    def __init__(self, op: str, needed: int, available: int):
        self.op = op
        self.needed = needed
        self.available = available
        super().__init__(
            f"{op}: needs {needed} level(s), ciphertext has {available}"
        )


class KeyMissingError(CipherfitError):
    """A required evaluation key (rotation step, relin) is absent."""


class FormatError(CipherfitError):
    """Malformed or truncated binary file/message."""


class DigestMismatchError(FormatError):
    """Serialized object does not match the active scheme parameters."""


class ProtocolError(CipherfitError):
    """Out-of-order or ill-formed protocol message."""
