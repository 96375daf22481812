class InputError(Exception):
    """Raised when an input file, argument or sample is malformed."""


class NumericalError(Exception):
    """Raised when a computation is degenerate or numerically unsafe."""


class ChainParseError(InputError):
    """Raised when a chain description cannot be parsed."""


class ChainValidationError(InputError):
    """Raised when a chain description violates a structural invariant."""


class SchemaError(InputError):
    """Raised when a config, scenario or CSV file does not match its schema."""


class ScenarioError(InputError):
    """Raised when a scenario file references unknown keys or sites."""


class DimensionMismatchError(InputError):
    """Raised when vector or matrix sizes disagree with the chain."""


class PwmRangeError(InputError):
    """Raised when a PWM duty cycle lies outside [-1, 1]."""


class NonUnitAxisError(InputError):
    """Raised when an axis or normal is not unit length."""


class NonFiniteInputError(InputError):
    """Raised when telemetry or targets contain NaN or infinite values."""


class DegenerateSweepError(NumericalError):
    """Raised when a calibration sweep cannot determine the fitted parameter."""


class SingularSystemError(NumericalError):
    """Raised when an unregularised Gram matrix is rank deficient."""


class NotPositiveDefiniteError(NumericalError):
    """Raised when a stiffness matrix is not symmetric positive semidefinite."""


class StabilityError(NumericalError):
    """Raised when the admittance step would be numerically unstable."""


class CalibrationWarning(UserWarning):
    """Issued when a calibrated parameter had to be clamped."""
