"""Exception hierarchy shared by every locrom stage."""


class LocromError(Exception):
    """Base class for all library errors."""


class InvalidInputError(LocromError, ValueError):
    pass


class NumericalFailureError(LocromError, ArithmeticError):
    pass


class SingularMatrixError(NumericalFailureError):
    pass


class SingularJacobianError(NumericalFailureError):
    """Newton hit a singular Jacobian; ``iterate`` holds the offending state."""

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


class InvalidScheduleError(InvalidInputError):
    pass


class OutOfDomainError(InvalidInputError):
    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)


class DuplicatePointError(InvalidInputError):
    pass


class SnapshotGenerationError(LocromError):
    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class CorruptStoreError(LocromError):
    pass


class InvalidKError(InvalidInputError):
    pass


class InvalidAssignmentError(InvalidInputError):
    pass


class ElbowUndefinedError(LocromError):
    pass


class DegenerateClusterError(LocromError):
    pass


class InconsistentDecompositionError(LocromError):
    pass


class UndefinedRelativeError(LocromError, ZeroDivisionError):
    pass


class EmptyReportError(InvalidInputError):
    pass


class ConfigError(InvalidInputError):
    pass


class StageError(LocromError):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
