"""Exception types raised across the package."""


class WalkError(Exception):
    """Base class for all package errors."""


class DimensionError(WalkError, ValueError):
    """Operators or states of mismatched dimension were combined."""


class NotHermitianError(WalkError, ValueError):
    """A Hamiltonian handed to the propagator is not Hermitian."""


class TimeStepTooLarge(WalkError, ValueError):
    """A rate times the time step leaves the probability interval [0, 1].

    ``parameter`` names the offending rate (e.g. ``"k21"``) so front ends can
    report it.
    """

    def __init__(self, message, parameter=None, value=None):
        super().__init__(message)
        self.parameter = parameter
        self.value = value


class SingularOperator(WalkError, ArithmeticError):
    """Superoperator is numerically singular.

    For ``1 - P K`` this means some state other than the target traps
    probability forever, so the expected hitting time is infinite.
    """


class ConvergenceError(WalkError, ArithmeticError):
    """Generating-function argument lies outside the radius of convergence."""


class ThresholdNotReached(WalkError, RuntimeError):
    """Target population never reached the requested level."""


class NoArrival(ThresholdNotReached):
    """A jump-process trajectory can never reach the target node."""


class TailTooHeavy(WalkError, RuntimeError):
    """Truncated hitting distribution still carries too much unaccounted mass."""

    def __init__(self, message, tail_mass=None):
        super().__init__(message)
        self.tail_mass = tail_mass


class ConfigError(WalkError, ValueError):
    """Malformed reaction-graph configuration."""
