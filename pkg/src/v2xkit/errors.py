"""Exception types raised across the toolkit.

Validation errors (bad inputs, shapes, configs) derive from ``ValidationError``
and map to CLI exit code 2. Numeric failures derive from ``NumericError`` and
map to exit code 3.
"""


class V2XError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(V2XError, ValueError):
    pass


class NumericError(V2XError, ArithmeticError):
    pass


class DepthNearZero(NumericError):
    pass


class DegenerateFov(NumericError):
    pass


class InfeasibleSharedRatio(NumericError):
    pass


class OutOfRange(ValidationError):
    pass


class UnknownVertex(ValidationError, KeyError):
    pass


class UnknownClass(ValidationError, KeyError):
    pass


class UnknownObject(ValidationError, KeyError):
    pass


class ShapeMismatch(ValidationError):
    pass


class InvalidThresholds(ValidationError):
    pass


class NeighborBiasMismatch(ValidationError):
    pass


class ZeroVector(ValidationError):
    pass


class MissingMatch(ValidationError):
    pass


class EmptySequence(ValidationError):
    pass


class EmptyScene(ValidationError):
    pass


class NegativeComplexity(ValidationError):
    pass


class OutOfExtent(ValidationError):
    pass


class NotObserved(ValidationError):
    """An edited object ends up visible to no agent."""


class InvalidConfig(ValidationError):
    pass


class InvalidScene(ValidationError):
    pass
