"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Raised when tensor extents disagree with what an operation expects."""


class ConfigError(ValueError):
    """Raised for inconsistent model, training or dataset configuration."""


class StateError(RuntimeError):
    """Raised when an object is used in a state that does not permit the call."""


class DivergenceError(FloatingPointError):
    """Raised when training produces a non-finite loss."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
