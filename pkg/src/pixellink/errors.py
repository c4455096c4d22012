"""Exception hierarchy shared across the package.

Every error raised by library code derives from PixelLinkError, which
carries the process exit code the CLI maps it to.
"""


class PixelLinkError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class FileFormatError(PixelLinkError):
    """Malformed tensor or image file."""

    exit_code = 3


class BadMagic(FileFormatError):
    pass


class UnsupportedVersion(FileFormatError):
    pass


class InvalidHeader(FileFormatError):
    pass


class TruncatedFile(FileFormatError):
    pass


class DimOverflow(FileFormatError):
    pass


class UnsupportedFormat(FileFormatError):
    pass


class IoFailure(FileFormatError):
    pass


class AnnotationParseError(PixelLinkError):
    exit_code = 4


class ShapeMismatch(PixelLinkError):
    exit_code = 5


class OutOfRangeProbability(PixelLinkError):
    exit_code = 5


class NonFiniteLogits(PixelLinkError):
    exit_code = 5


class ChannelMismatch(PixelLinkError):
    exit_code = 5


class DegenerateGeometry(PixelLinkError):
    exit_code = 6


class EmptyInput(PixelLinkError):
    exit_code = 7


class MissingPair(PixelLinkError):
    exit_code = 7


class EmptyDataset(PixelLinkError):
    exit_code = 7


class ConfigError(PixelLinkError):
    exit_code = 8
