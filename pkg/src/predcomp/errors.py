"""Exception hierarchy shared by the simulator modules."""


class PredcompError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(PredcompError, ValueError):
    """Inconsistent dimensions or invalid scenario parameters."""


class NumericalBlowupError(PredcompError, ArithmeticError):
    """A state became NaN or infinite."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class NoMeasurementError(PredcompError):
    """No measurement packet available to resolve."""


class StarvationError(PredcompError):
    """The actuator has no valid control value for the current time."""

    def __init__(self, now, message=None):
        self.now = now
        super().__init__(message or f"actuator buffer starved at n={now}")


class ConsistencyError(PredcompError):
    """The prediction control sequence has no entry where one is required."""

    def __init__(self, time, message=None):
        self.time = time
        super().__init__(message or f"prediction input undefined at k={time}")


class GenerationError(PredcompError):
    """The input generator could not produce a control sequence."""


class SingularityError(PredcompError, ValueError):
    """Stage cost evaluated too close to the origin of the (x1, x3) plane."""
