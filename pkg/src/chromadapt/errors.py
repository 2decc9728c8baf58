"""Exception types shared across the package."""


class ChromadaptError(Exception):
    """Base class for all package errors."""


class ShapeError(ChromadaptError):
    """Tensor arguments have incompatible shapes."""


class InvalidTargetError(ChromadaptError):
    """Classification targets are not drawn from {0, 1}."""


class InvalidProbabilityError(ChromadaptError):
    """A probability argument lies outside (0, 1)."""


class InvalidSpecError(ChromadaptError):
    """A network spec violates its structural constraints."""


class CheckpointError(ChromadaptError):
    """A checkpoint file is malformed or its version/spec does not match."""


class DatasetError(ChromadaptError):
    """A dataset or manifest is missing, empty, or inconsistent."""


class DecodeError(DatasetError):
    """An image file could not be decoded."""


class DivergenceError(ChromadaptError):
    """Training produced non-finite values."""


class ConfigError(ChromadaptError):
    """A configuration file or flag combination is invalid."""
