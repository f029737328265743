"""Exception hierarchy shared by all ricciclass modules."""

from __future__ import annotations


class RicciClassError(Exception):
    """Base class for every error raised by this package."""


# expression kernel

class DomainViolation(RicciClassError, ArithmeticError):
    """An evaluation left the domain of ln, sqrt, a fractional power or a quotient."""


class UnboundSymbol(RicciClassError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"symbol {self.name!r} has no binding"


class InconclusiveZeroTest(RicciClassError):
    """Too few admissible sample points to decide a zero test."""


# manifold definitions

class ParseError(RicciClassError):
    """Base for .rfm parse failures; carries a 1-based line and column."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(f"{message} (line {line}, column {column})")


class RfmSyntaxError(ParseError):
    pass


class UndeclaredSymbol(ParseError):
    pass


class DimensionMismatch(ParseError):
    pass


class NotPositiveDefinite(RicciClassError):
    pass


class EmptyDomain(RicciClassError):
    pass


# tensors

class SingularMetric(RicciClassError):
    pass


class IndexOutOfRange(RicciClassError, IndexError):
    pass


class DimensionTooLow(RicciClassError):
    pass


class NotSymmetric(RicciClassError):
    pass


# conditions

class RicciVanishes(RicciClassError):
    """The Ricci tensor is numerically zero at every sample point."""


class MissingLambda(RicciClassError):
    pass


class PreconditionNotRR(RicciClassError):
    pass


class InvalidRank(RicciClassError, ValueError):
    pass


class ParameterConstraintViolation(RicciClassError, ValueError):
    pass


class UnknownFamily(RicciClassError, KeyError):
    pass


# ODE pipeline

class GuardViolationAtStart(RicciClassError):
    pass


class StepTooLarge(RicciClassError):
    pass


class BoundaryTooClose(RicciClassError):
    pass
