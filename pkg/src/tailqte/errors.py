"""Exception hierarchy shared across the package.

Four families, one per CLI exit code: schema (2), estimation (3),
numerical (4), configuration (5).
"""


class TailQteError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class SchemaError(TailQteError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class MissingColumn(SchemaError):
    pass


class NonBinaryTreatment(SchemaError):
    pass


class EstimationError(TailQteError):
    """An estimator could not produce a value on the given data."""

    exit_code = 3


class EmptyEffectiveSample(EstimationError):
    """No positive-weight observations remain on the requested arm."""


class ScoreOutOfRange(EstimationError):
    pass


class InsufficientData(EstimationError):
    pass


class NonPositiveValue(EstimationError):
    pass


class IntermediateRegimeViolated(EstimationError):
    """n * tau_n below the floor for the intermediate-quantile regime."""


class TooSmall(EstimationError):
    pass


class InsufficientReplicates(EstimationError):
    pass


class NumericalError(TailQteError):
    """A numerical routine failed to converge or produced garbage."""

    exit_code = 4


class SingularHessian(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass


class DegenerateCdf(NumericalError):
    pass


class ConfigError(TailQteError):
    """Invalid configuration or specification parameters."""

    exit_code = 5


class InvalidSpec(ConfigError):
    pass


class ThetaRequiredPositive(ConfigError):
    pass


class InvalidBalanceConstant(ConfigError):
    pass


class SeparationWarning(UserWarning):
    """Logistic fit hit (near-)complete separation; last iterate returned."""
