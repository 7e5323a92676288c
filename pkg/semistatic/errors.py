"""Exceptions raised by SemiStatic."""


class SemiStaticError(Exception):
    """Base class for all library errors."""


class MarketSpecError(SemiStaticError, ValueError):
    """Market specification does not match the schema."""

    def __init__(self, message: str, field: str = ''):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ProbabilitySumError(MarketSpecError):
    """Branch probabilities of a node do not sum to one."""


class ArbitrageError(SemiStaticError):
    """Market admits no equivalent martingale measure."""


class ArbitragePriceError(SemiStaticError, ValueError):
    """Derivative price lies outside the arbitrage-free price set."""


class DimensionMismatchError(SemiStaticError, ValueError):
    """Vector lengths disagree with the model."""


class DomainError(SemiStaticError, ValueError):
    """Argument outside the domain of a utility or conjugate function."""


class UnboundedPolytopeError(SemiStaticError, RuntimeError):
    """A polytope or LP expected to be bounded is not."""


class DimensionTooLargeError(SemiStaticError, RuntimeError):
    """Vertex enumeration requested above the configured dimension cap."""


class NumericalFailureError(SemiStaticError, RuntimeError):
    """Iterative method exceeded its iteration cap."""


class SolverError(SemiStaticError, RuntimeError):
    """An optimization problem could not be solved."""


class VerificationFailure(SemiStaticError):
    """At least one verification check failed."""
