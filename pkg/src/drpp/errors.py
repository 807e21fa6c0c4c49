"""Exception hierarchy shared by every drpp module."""


class DrppError(Exception):
    """Base class for all package errors."""


class NumericError(DrppError):
    """Raised when a numeric precondition fails (CLI exit code 3)."""


class NotSymmetric(NumericError):
    pass


class NotPsd(NumericError):
    pass


class DimensionMismatch(NumericError):
    pass


class SingularMatrix(NumericError):
    pass


class InvalidProbability(NumericError):
    pass


class NonPositiveEigenvalue(NumericError):
    pass


class InfeasibleMean(NumericError):
    pass


class NotPsdResult(NumericError):
    pass


class NoConvergence(NumericError):
    pass


class EmptyInput(NumericError):
    pass


class MechanismOrderViolation(DrppError):
    """An adversarial realization was requested before the target predicted."""


class ConfigError(DrppError):
    """Base class for configuration problems (CLI exit code 2)."""


class SchemaError(ConfigError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ValidationError(ConfigError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
