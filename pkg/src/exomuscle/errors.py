"""Exception hierarchy shared by all exomuscle modules."""


class ExoMuscleError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ExoMuscleError, ValueError):
    """A configuration or input record violates its documented invariants."""


class DomainError(ExoMuscleError, ValueError):
    """A function was evaluated outside its domain."""


class NoTangentError(ExoMuscleError):
    """No tangent from the thigh anchor touches the profile inside its domain."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class RankDeficiencyError(ExoMuscleError, ValueError):
    """Least-squares system does not have a unique solution."""


class ConvergenceError(ExoMuscleError):
    """An iterative procedure ran out of budget before meeting its tolerance.

    ``best`` holds the best iterate found and ``rms`` its objective value.
    """

    def __init__(self, message, best=None, rms=None):
        super().__init__(message)
        self.best = best
        self.rms = rms


class BeltRangeError(ExoMuscleError, ValueError):
    """Force or elongation outside the invertible range of a belt model."""


class SimulationError(ExoMuscleError):
    """A closed-loop run aborted; ``trace`` keeps the rows recorded so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
