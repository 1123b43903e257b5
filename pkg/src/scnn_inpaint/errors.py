"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: configuration and
validation problems exit 2, I/O problems exit 1, corrupt on-disk data
exits 3.
"""


class ConfigurationError(ValueError):
    """A parameter, flag, or config-file value is invalid or inconsistent."""


class ShapeMismatchError(ValueError):
    """Operands have incompatible shapes for the requested operation."""


class NumericError(FloatingPointError):
    """A value that must be finite is NaN or infinite."""


class ImageFormatError(ValueError):
    """An image file's header or payload is malformed."""


class UnsupportedImageError(ImageFormatError):
    """An image file is in a format this package does not read."""


class CheckpointError(RuntimeError):
    """A checkpoint file is truncated, corrupt, or fails its checksum."""


class CheckpointVersionError(CheckpointError):
    """A checkpoint was written with an incompatible format version."""
