"""Exception hierarchy shared across the package."""


class MipDqnError(Exception):
    """Base class for every error raised by this package."""


class DomainError(MipDqnError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class ValidationError(MipDqnError, ValueError):
    """Input data failed a structural or completeness check."""


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(ValidationError):
    """Configuration file is missing keys or holds invalid values."""


class CheckpointError(MipDqnError):
    """Checkpoint file is truncated, corrupt or inconsistent."""


class CheckpointVersionError(CheckpointError):
    pass


class UnsupportedArchitectureError(MipDqnError):
    pass


class SizeError(MipDqnError):
    """Problem is too large for the exhaustive reference solver."""


class SolverError(MipDqnError):
    """The MIP backend failed or is unavailable."""


class SolverTimeoutError(SolverError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class InfeasibleError(MipDqnError):
    def __init__(self, message, constraint=None, step=None):
        self.constraint = constraint
        self.step = step
        super().__init__(message)


class TrainingDivergedError(MipDqnError):
    pass
