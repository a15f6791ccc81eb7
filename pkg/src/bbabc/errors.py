"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A distribution or algorithm parameter is outside its valid range."""


class DimensionError(ValueError):
    """Vectors, priors or tables of incompatible size were combined."""


class DegenerateDataError(ValueError):
    """The data carry no variation where the computation needs some."""


class PoleError(ArithmeticError):
    """A closed-form expression was evaluated at or beyond one of its poles."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""
