"""Exception types shared across the package."""


class MMKError(Exception):
    """Base class for errors raised by this package."""


class FormatError(MMKError):
    """A file or record does not match its declared format."""


class IngestionError(MMKError):
    """A source file (frame image, descriptor file) cannot be read."""


class TrainingError(MMKError):
    """A model or codebook cannot be trained from the given data."""


class NumericalError(MMKError):
    """A numerical routine produced unusable output."""
