"""Exception hierarchy shared across the fusion pipeline."""


class FusionError(Exception):
    """Base class for every error raised by this package."""


class InvalidImageError(FusionError, ValueError):
    pass


class ImageFormatError(FusionError, ValueError):
    """Raised for multi-channel, palette or >8-bit rasters."""


class IncompatiblePairError(FusionError, ValueError):
    pass


class UnsupportedFilterError(FusionError, ValueError):
    pass


class InvalidSpecError(FusionError, ValueError):
    pass


class TooSmallError(FusionError, ValueError):
    pass


class InvalidDecompositionError(FusionError, ValueError):
    pass


class OutOfRangeError(FusionError, IndexError):
    pass


class InvalidParameterError(FusionError, ValueError):
    pass
