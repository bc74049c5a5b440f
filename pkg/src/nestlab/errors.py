"""Exception hierarchy shared by all modules.

Every error carries a ``record`` dictionary so the command-line harness can
serialize it without inspecting the exception type.
"""


class NestlabError(Exception):
    """Base class for all computational errors raised by the library."""

    def __init__(self, message="", **record):
        super().__init__(message)
        self.record = dict(record)

    def to_record(self):
        out = {"error": type(self).__name__, "message": str(self)}
        for key, val in self.record.items():
            out[key] = val if isinstance(val, (int, float, str, bool, type(None))) else str(val)
        return out


class DomainError(NestlabError, ValueError):
    """A real map was evaluated outside ``[-1, 1]``."""


class SingularAtCritical(NestlabError, ZeroDivisionError):
    """A quantity dividing by ``Df`` was requested at the critical point."""


class NotUnimodal(NestlabError, ValueError):
    """A perturbed family acquired an extra critical point."""

    def __init__(self, lam, message=None):
        super().__init__(message or f"family is not unimodal at lambda={lam}", lam=lam)
        self.lam = lam


class NoReversingFixedPoint(NestlabError):
    pass


class PeriodicCritical(NestlabError):
    """The critical orbit is (pre)periodic within tolerance."""


class EscapedNest(NestlabError):
    """The critical orbit did not return within the time budget."""


class PrecisionExhausted(NestlabError):
    pass


class CriticalHit(NestlabError):
    """The critical orbit landed on the critical point at working precision."""


class BudgetExceeded(NestlabError):
    """An enumeration stopped early; the partial result is attached."""

    def __init__(self, message="", partial=None, **record):
        super().__init__(message, **record)
        self.partial = partial


class InsufficientLevels(NestlabError):
    pass


class InsufficientRows(NestlabError):
    pass


class NotInF(NestlabError):
    """The parameter does not admit a principal nest to the requested level."""


class AddressUnresolvable(NestlabError):
    pass


class MonotonicityViolation(NestlabError):
    pass


class OutOfRange(NestlabError, ValueError):
    pass


class EmptyInterval(NestlabError, ValueError):
    pass


class DegenerateInterval(NestlabError, ValueError):
    pass


class NotNested(NestlabError):
    pass


class GridTooCoarse(NestlabError):
    pass


class ConfigError(NestlabError):
    """Malformed experiment configuration (maps to exit code 2)."""
