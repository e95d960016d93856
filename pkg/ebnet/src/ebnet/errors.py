"""Exception hierarchy. EbnetError is the catch point for the CLI."""


class EbnetError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EbnetError):
    """Invalid network or training configuration."""


class DataFormatError(EbnetError):
    """Dataset directory missing, malformed, or failing checksums."""


class ShapeError(EbnetError):
    """Tensor arguments with incompatible shapes."""


class WeightsError(EbnetError):
    """Missing or incompatible saved weights."""
