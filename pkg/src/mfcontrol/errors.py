"""Exception hierarchy shared by the simulators, solvers and the CLI."""


class MFControlError(Exception):
    """Base class for all package errors."""


class ParameterError(MFControlError, ValueError):
    """Invalid argument or inconsistent problem data."""


class SubsampleRequired(ParameterError):
    """An exact transport problem exceeds the configured support-size cap."""


class UnsupportedSpecError(ParameterError):
    """A field, kernel or dimension outside the supported family."""


class StepSizeError(ParameterError):
    """A time step violates the stability (CFL) restriction."""


class ConfigError(MFControlError):
    """Malformed or unknown configuration content."""


class NumericalError(MFControlError, ArithmeticError):
    """Non-finite values produced during a computation."""


class BlowUpError(NumericalError):
    """A particle state became non-finite during time integration."""


class ConvergenceError(NumericalError):
    """A fixed-point iteration did not reach its tolerance.

    ``history`` holds the residual after every completed sweep.
    """

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)
