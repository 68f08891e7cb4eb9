"""Exception types raised by endrisk."""


class EndRiskError(Exception):
    """Base class for all library errors."""


class DomainError(EndRiskError, ValueError):
    """An argument lies outside the domain of the operation."""


class InfiniteMeanError(EndRiskError, ValueError):
    """The marginal distribution has no finite mean."""


class DegenerateBranchError(EndRiskError, ArithmeticError):
    """Both branch quantiles coincide away from the minimum of H."""


class InvalidMixError(EndRiskError, ValueError):
    """A complete-mix provider returned a block whose sum is not constant."""


class ConvexityError(EndRiskError, ValueError):
    """A function supplied as convex failed the midpoint spot check."""


class UnsupportedCaseError(EndRiskError, ValueError):
    """The requested bound is not available for this distribution."""


class BudgetError(EndRiskError, ValueError):
    """Sample budget too small (or too large) for the requested statistic."""


class DistSpecError(EndRiskError, ValueError):
    """Malformed distribution spec string.

    ``position`` is the 0-based column where parsing failed.
    """

    def __init__(self, message, text="", position=0):
        self.text = text
        self.position = position
        if text:
            message = f"{message} at column {position}: {text!r}"
        super().__init__(message)
