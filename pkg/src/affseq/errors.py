"""Exception hierarchy and process exit codes.

File-level problems (unreadable, malformed, truncated, corrupt) map to exit
code 2; contract violations (bad sizes, values, or configuration) map to 3;
non-finite numerics map to 4.
"""

EXIT_OK = 0
EXIT_IO = 2
EXIT_DOMAIN = 3
EXIT_NUMERIC = 4


class AffseqError(Exception):
    """Base class for every error raised by this package."""


class FileFormatError(AffseqError):
    """Structurally invalid file: bad magic, malformed header, bad layout."""


class UnsupportedEncodingError(FileFormatError):
    """File is well-formed but uses a codec or layout this engine does not read."""


class VersionMismatchError(FileFormatError):
    """Container version is not one this build understands."""


class TruncatedFileError(FileFormatError):
    """Payload is shorter than the header declares."""


class ParseError(FileFormatError):
    """Unparseable field in a text file, e.g. non-numeric where a number is required."""


class ChecksumError(FileFormatError):
    """Stored CRC does not match the bytes read."""


class DomainError(AffseqError):
    """Operation invoked outside its contract."""


class WidthMismatchError(DomainError):
    """Matrix width differs from the declared modality width."""


class CoverageError(DomainError):
    """A required track, file, or frame range is missing."""


class ConfigError(DomainError):
    """Invalid or contradictory configuration."""


class NumericFaultError(AffseqError):
    """NaN or Inf appeared where finite values are required."""


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit-code contract (0 ok, 2 I/O, 3 domain, 4 numeric)."""
    if isinstance(exc, NumericFaultError):
        return EXIT_NUMERIC
    if isinstance(exc, DomainError):
        return EXIT_DOMAIN
    if isinstance(exc, (FileFormatError, OSError)):
        return EXIT_IO
    return 1
