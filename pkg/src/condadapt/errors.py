"""Exception types shared across the package."""


class InputError(ValueError):
    """Array shapes or values violate an operation's contract."""


class ConfigError(ValueError):
    """Invalid configuration value (bandwidth, epsilon, grid, ...)."""


class DegenerateDataError(ValueError):
    """Data admits no meaningful statistic (e.g. all samples identical)."""


class NumericalError(ArithmeticError):
    """A computation produced non-finite or non-factorizable intermediates."""


class ParseError(ValueError):
    """A feature file violates the expected schema."""
