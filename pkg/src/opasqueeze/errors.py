"""Exception types raised by opasqueeze."""


class InvalidArgumentError(ValueError):
    """A parameter is outside its physical or mathematical domain."""


class NonIdentifiableError(ValueError):
    """The data cannot determine the requested parameters."""


class InsufficientSpanError(ValueError):
    """A trace is too short to cover half a scan period."""


class UnphysicalInputError(ValueError):
    """Measured noise lies below the floor allowed by the stated loss."""


class ParseError(ValueError):
    """Malformed input file. ``line`` is 1-based, or None for whole-file problems."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
