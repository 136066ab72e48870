"""Exception types shared across the package."""

from __future__ import annotations


class FpmeError(Exception):
    """Base class for all library errors."""


class ParameterError(FpmeError, ValueError):
    """Parameters outside the supported set (alpha, m, d, mass)."""


class DomainError(FpmeError, ValueError):
    """Argument outside the domain of a special function or kernel."""


class PoleError(DomainError):
    """Gamma function evaluated at a non-positive integer."""


class RegimeError(FpmeError, ValueError):
    """Operation requested for a regime it does not apply to."""


class NumericalOverflowError(FpmeError, OverflowError):
    """Result not representable in double precision."""


class ConvergenceError(FpmeError, RuntimeError):
    """Iteration or quadrature did not reach its tolerance.

    The best available estimate is attached so callers can inspect it.
    """

    def __init__(self, message: str, value=None, err_est: float | None = None, report=None):
        super().__init__(message)
        self.value = value
        self.err_est = err_est
        self.report = report


class QuadratureError(ConvergenceError):
    """Adaptive quadrature ran out of subdivisions."""


class MonotonicityError(FpmeError, RuntimeError):
    """A Picard iterate broke the monotone sub/supersolution ordering."""

    def __init__(self, message: str, iteration: int = -1, node: int = -1, amount: float = float("nan")):
        super().__init__(message)
        self.iteration = iteration
        self.node = node
        self.amount = amount


class BracketViolation(MonotonicityError):
    """An iterate left the sub/supersolution bracket."""


class MassError(FpmeError, ValueError):
    """Mass of a profile is zero, negative or not finite."""
