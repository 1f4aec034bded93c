"""Error types shared by every module of the toolkit."""


class OTGPError(Exception):
    """Base class for all toolkit errors."""


class InputError(OTGPError, ValueError):
    """Invalid argument: out-of-range value, wrong shape, non-finite data."""


class UnsupportedCaseError(OTGPError):
    """The inputs are valid but outside what the implementation supports."""


class ResourceError(OTGPError):
    """A configured size cap was exceeded."""


class NumericError(OTGPError):
    """Factorization, solve or integration failed."""


class ParseError(OTGPError):
    """Malformed input file. `row` is the 1-based line number, header included."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class OutputError(OTGPError, OSError):
    """An output path could not be written."""
