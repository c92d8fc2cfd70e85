"""Exception hierarchy shared by all exobench modules."""


class ExobenchError(Exception):
    """Base class for domain failures (CLI exit status 1)."""


class ModelConfigError(ExobenchError):
    """The model document could not be parsed or is structurally broken."""


class ModelValidationError(ExobenchError):
    """The chain parsed but violates one or more invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"model failed validation:\n{lines}")


class UnknownCoordinateError(ExobenchError, KeyError):
    pass


class ClosureError(ExobenchError):
    """Loop-closure Newton iteration failed (non-convergence or singular)."""


class SingularJacobianError(ClosureError):
    pass


class IkError(ExobenchError):
    def __init__(self, message, frame=None):
        self.frame = frame
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)


class ConstraintViolationError(ExobenchError):
    """A state handed to the dynamics does not satisfy the loop constraints."""


class DifferentiationError(ExobenchError):
    pass


class DecodeError(ExobenchError):
    def __init__(self, message, index=None):
        self.index = index
        if index is not None:
            message = f"record {index}: {message}"
        super().__init__(message)


class LogParseError(ExobenchError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AnalysisError(ExobenchError):
    pass
