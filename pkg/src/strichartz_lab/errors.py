"""Exception hierarchy.  The CLI maps each family onto an exit code."""


class LabError(Exception):
    """Base class for all errors raised by strichartz_lab."""


class ParameterError(LabError, ValueError):
    """Inadmissible (lambda, delta, K, n) or malformed configuration."""


class GridError(LabError, ValueError):
    """A space-time grid violates a sampling rule or does not match its data."""


class SupportError(LabError, ValueError):
    """Lattice data lies outside the frequency box an operation accepts."""


class QuadratureError(LabError, ArithmeticError):
    """A quadrature failed its refinement certificate."""


class InvariantViolation(LabError, AssertionError):
    """A certified inequality or oracle audit failed."""
