"""Exception types shared across the package."""


class QDesignError(Exception):
    """Base class for all package errors."""


class CapacityError(QDesignError):
    """Requested size exceeds what a dense/oracle computation can handle."""


class ShapeError(QDesignError, ValueError):
    """Array shapes or dimensions do not match."""


class CalibrationError(QDesignError):
    """Brickwork depth calibration did not converge under the depth cap."""


class FormatError(QDesignError):
    """A binary file is corrupt, truncated or has the wrong magic."""


class ConfigError(QDesignError, ValueError):
    """Invalid experiment configuration."""
