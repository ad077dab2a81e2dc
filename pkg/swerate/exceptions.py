"""Exception types raised by the swerate package."""

from __future__ import annotations

from typing import Optional


class SweRateError(Exception):
    """Base class for every domain error; the CLI maps these to exit code 1."""


class ExpressionSyntaxError(SweRateError, ValueError):
    def __init__(self, message: str, offset: int, source: str = ""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.source = source


class UnknownIdentifierError(ExpressionSyntaxError):
    pass


class ArityError(ExpressionSyntaxError):
    pass


class ExpressionEvalError(SweRateError, ArithmeticError):
    pass


class ProblemConfigError(SweRateError, ValueError):
    """Bad problem file / config.ini content. The CLI treats this as a usage error."""


class GridError(SweRateError, ValueError):
    pass


class InstabilityError(SweRateError, RuntimeError):
    pass


class PicardDivergenceError(SweRateError, RuntimeError):
    pass


class AssumptionViolation(SweRateError, ValueError):
    """sigma came too close to zero where dividing by it is needed."""

    def __init__(self, message: str, min_abs_sigma: Optional[float] = None):
        super().__init__(message)
        self.min_abs_sigma = min_abs_sigma


class MembershipError(SweRateError, ValueError):
    pass


class NotLinearClassError(SweRateError, ValueError):
    pass


class BumpSupportError(SweRateError, ValueError):
    pass
