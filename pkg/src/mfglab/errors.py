"""Exception types shared across the solvers.

Each class carries an ``exit_code`` so the CLI can map failures without a
lookup table of its own.
"""


class MfgLabError(Exception):
    exit_code = 5


class InvalidArgument(MfgLabError, ValueError):
    exit_code = 2


class NumericalFailure(MfgLabError, ArithmeticError):
    exit_code = 3


class NonConvergence(NumericalFailure):
    """Iteration budget exhausted. ``history`` holds the residual trail."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class DegenerateEquilibrium(MfgLabError):
    exit_code = 4


class UnsupportedInstance(MfgLabError):
    exit_code = 2
