"""Exception hierarchy shared by all modules."""


class ProxBoostError(Exception):
    """Base class for every error raised by this package."""


class InvalidTargetError(ProxBoostError, ValueError):
    """Targets are not admissible for the loss (e.g. labels outside {-1, +1})."""


class DegenerateClassError(ProxBoostError, ValueError):
    """A classification sample holds a single class where two are required."""


class DataError(ProxBoostError, ValueError):
    """Malformed or inconsistent input data."""


class NumericError(ProxBoostError, ArithmeticError):
    """A numerical routine failed (non-convergence, NaN or overflow)."""
