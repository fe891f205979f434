"""Exception hierarchy shared by every module."""


class LplrError(Exception):
    """Base class for all package errors."""


# numkit
class NotSymmetric(LplrError):
    pass


class NonFinite(LplrError):
    pass


class ZeroVector(LplrError):
    pass


class DegenerateX(LplrError):
    pass


# netcore
class ShapeMismatch(LplrError, ValueError):
    pass


class InvalidArch(LplrError, ValueError):
    pass


# ntk
class BudgetExceeded(LplrError):
    pass


class NonPositiveEigenvalue(LplrError):
    pass


class IdenticalParams(LplrError):
    pass


# landscape
class DegeneratePair(LplrError):
    pass


# trainer / analysis
class EmptyTrajectory(LplrError):
    pass


class InsufficientPoints(LplrError):
    pass


class RateOutOfRange(LplrError):
    pass


class MismatchedLengths(LplrError):
    pass


class DivergenceDetected(LplrError):
    pass


# datasets
class IdxError(LplrError):
    pass


class BadMagic(IdxError):
    pass


class TruncatedFile(IdxError):
    pass


class CountMismatch(IdxError):
    pass


class ClassAbsent(IdxError):
    pass


# cli
class ConfigError(LplrError):
    pass
