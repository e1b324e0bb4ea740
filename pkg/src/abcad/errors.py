"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or inconsistent arguments."""


class ShapeError(ValueError):
    """Array dimensions do not match what a network or dataset expects."""


class NumericalError(ArithmeticError):
    """A non-finite value appeared in a gradient, loss, or parameter."""


class ParseError(ValueError):
    """Malformed input file."""


class EvaluationError(ValueError):
    """A metric cannot be computed for the given inputs."""
