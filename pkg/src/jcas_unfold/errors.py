"""Exception hierarchy shared by every module."""


class JcasError(Exception):
    """Base class for all package errors."""


class DimensionError(JcasError, ValueError):
    pass


class ParameterError(JcasError, ValueError):
    pass


class ConfigurationError(JcasError, ValueError):
    pass


class ConstraintError(JcasError, ValueError):
    pass


class NumericError(JcasError, ArithmeticError):
    pass


class SizeError(JcasError, ValueError):
    pass


class ConsistencyError(JcasError, ValueError):
    pass


class TrainingError(JcasError, RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class ModelFileError(JcasError, OSError):
    """Model file could not be read: bad version, corrupt payload or truncated."""


class MissingModelError(JcasError, LookupError):
    def __init__(self, rho, path=None):
        where = f" at {path}" if path is not None else ""
        super().__init__(
            f"no trained model for rho={rho:g}{where}; run `jcas-unfold train --rho {rho:g}` first"
        )
        self.rho = rho
        self.path = path
