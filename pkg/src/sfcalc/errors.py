"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class CalculusError(Exception):
    """Base class for every error raised by the library."""


class DimensionMismatch(CalculusError, ValueError):
    pass


class NonPositiveScalarPart(CalculusError, ValueError):
    pass


class ZeroScalarPart(CalculusError, ValueError):
    pass


class DomainError(CalculusError, ValueError):
    """A slice function was evaluated outside its declared domain."""


class SingularAtS(CalculusError):
    """Q_s[T] is numerically singular: s lies in the S-spectrum."""

    def __init__(self, msg: str, s=None, sigma_min: float | None = None):
        super().__init__(msg)
        self.s = s
        self.sigma_min = sigma_min


class NotConverged(CalculusError):
    pass


class RegularizerSingular(CalculusError):
    pass


class NotInjective(CalculusError):
    pass


class OutsideSector(CalculusError, ValueError):
    pass


class NonPositiveCoefficient(CalculusError, ValueError):
    pass


class CaseIFailed(CalculusError):
    def __init__(self, msg: str, margin: float):
        super().__init__(msg)
        self.margin = margin


class NotSeparable(CalculusError, ValueError):
    pass


class GradeLeak(CalculusError):
    pass


class SingularShift(CalculusError):
    pass
