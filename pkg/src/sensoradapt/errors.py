"""Exception hierarchy shared by all modules."""


class SensorAdaptError(Exception):
    pass


class DimensionError(SensorAdaptError, ValueError):
    pass


class InvalidParameterError(SensorAdaptError, ValueError):
    pass


class EmptyFieldError(SensorAdaptError, ValueError):
    pass


class EmptyStoreError(SensorAdaptError, ValueError):
    pass


class GainSearchError(SensorAdaptError, RuntimeError):
    """No learning gain above the floor made the dissipation condition hold."""


class RankDeficiencyError(SensorAdaptError, ArithmeticError):
    pass


class InsufficientSamplesError(SensorAdaptError, ValueError):
    pass


class InfeasibleConfigurationError(SensorAdaptError, ValueError):
    pass


class SolverError(SensorAdaptError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class RejectedActionError(SensorAdaptError, ValueError):
    pass


class ConfigError(SensorAdaptError, ValueError):
    pass


class DivergenceError(SensorAdaptError, RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
