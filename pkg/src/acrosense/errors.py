"""Exception types shared across the package.

The CLI maps ``ValidationError`` to exit code 1 and ``NumericalError`` to
exit code 2.
"""


class AcroError(Exception):
    """Base class for all package errors."""


class ValidationError(AcroError, ValueError):
    """Bad input: schema violations, malformed files, infeasible requests."""


class NumericalError(AcroError, ArithmeticError):
    """A numerical routine failed (non-convergence, Cholesky breakdown)."""
