"""Exception hierarchy shared by the tracephase modules."""

from __future__ import annotations


class TracephaseError(Exception):
    """Base class for all package errors."""


class WordSyntaxError(TracephaseError, ValueError):
    """Raised for unknown generator tokens or malformed exponents."""


class LevelError(TracephaseError, ValueError):
    """Level outside [-2, 2]."""


class SingularPointError(TracephaseError):
    """The gradient of the Casimir vanishes, so the level set is not smooth there."""


class IdentityWordError(TracephaseError):
    """The word is the identity, so every point of the level set is fixed."""


class NotAFixedPointError(TracephaseError):
    pass


class DimensionError(TracephaseError, ValueError):
    pass


class BranchCutError(TracephaseError, ValueError):
    """Logarithm argument fell on the non-positive real axis."""


class InvalidPhaseError(TracephaseError, ValueError):
    """Phase has positive real part somewhere on the amplitude support."""


class DegenerateHessianError(TracephaseError):
    pass


class StationarityError(TracephaseError):
    """The gradient of the phase does not vanish at the proposed critical point."""


class CriticalSetError(TracephaseError):
    """Splitting precondition failed: the critical set is not {u = 0}."""


class QuadratureError(TracephaseError):
    """Quadrature did not reach its tolerance.

    ``value`` and ``error`` carry the best estimate that was obtained.
    """

    def __init__(self, message, value=None, error=None):
        super().__init__(message)
        self.value = value
        self.error = error


class IllConditionedFitError(TracephaseError):
    pass


class StructureViolation(TracephaseError):
    pass


class ConfigError(TracephaseError, ValueError):
    pass
