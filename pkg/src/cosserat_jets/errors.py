"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class CosseratError(Exception):
    """Base class for every error raised by this package."""


class DomainError(CosseratError, ValueError):
    """A point lies outside the chart box."""


class FieldNotEvaluable(CosseratError):
    """A user field failed (or returned non-finite values) at a stencil point."""

    def __init__(self, point, cause=None):
        self.point = point
        self.cause = cause
        msg = f"field not evaluable at {list(map(float, point))}"
        if cause is not None:
            msg += f": {cause}"
        super().__init__(msg)


class FlowLeftDomain(CosseratError):
    """An integrated flow produced a non-finite state or exited the chart."""

    def __init__(self, last_valid_time: float, reason: str = ""):
        self.last_valid_time = last_valid_time
        super().__init__(f"flow left domain after t={last_valid_time:g}" + (f" ({reason})" if reason else ""))


class ComposabilityError(CosseratError, ValueError):
    """source(g2) != target(g1) beyond the composability tolerance."""


class InversionError(CosseratError, ValueError):
    """A jet or matrix is (numerically) singular."""

    def __init__(self, msg: str, condition: float = float("inf")):
        self.condition = condition
        super().__init__(f"{msg} (condition estimate {condition:.3g})")


class SingularFieldError(CosseratError, ValueError):
    """A frame field is singular at some location."""

    def __init__(self, location, msg: str = "singular field value"):
        self.location = location
        super().__init__(f"{msg} at {location}")


class NotInvertibleByGbar(CosseratError):
    """A groupoid section fails the morphism property, so no parallelism maps onto it."""


class NotLinearSection(CosseratError):
    """A section map is not function-linear in its vector-field argument."""


class InsufficientData(CosseratError):
    """The generating groupoid sections needed for a construction are missing."""


class UnknownMedium(CosseratError, KeyError):
    """Requested a built-in medium that is not registered."""


class ConfigError(CosseratError):
    """Invalid run configuration (syntax or semantics)."""
