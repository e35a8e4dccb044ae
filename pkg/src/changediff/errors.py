class ChangeDiffError(Exception):
    """Base class for package errors."""


class ConfigError(ChangeDiffError, ValueError):
    pass


class DimensionError(ChangeDiffError, ValueError):
    """Input shapes violate a size or divisibility contract."""


class DataFormatError(ChangeDiffError, ValueError):
    """A label document, image, or manifest is malformed."""


class DivergenceError(ChangeDiffError, RuntimeError):
    """Training produced a non-finite loss."""
