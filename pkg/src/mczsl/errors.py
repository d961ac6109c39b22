"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible shapes. Message names both shapes."""


class FormatError(ValueError):
    """A binary tensor file or manifest is malformed. Message carries the byte offset
    or manifest key where parsing failed."""


class DataValidationError(ValueError):
    """A dataset invariant is violated. Message names the invariant."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


class ConfigError(ValueError):
    """A configuration value is out of range or unknown."""
