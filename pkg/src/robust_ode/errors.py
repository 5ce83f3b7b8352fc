"""Exception hierarchy.

Input errors map to CLI exit code 2, numerical failures to exit code 3.
"""


class RobustODEError(Exception):
    exit_code = 3


class InputError(RobustODEError, ValueError):
    exit_code = 2


class NumericalError(RobustODEError, ArithmeticError):
    exit_code = 3


class NonFiniteState(NumericalError):
    pass


class DegenerateDenominator(NumericalError):
    pass


class BlowUp(NumericalError):
    pass


class UnknownLevel(InputError):
    pass


class SingularLocalFit(NumericalError):
    pass


class EmptyWindow(NumericalError):
    pass


class GridMismatch(InputError):
    pass


class MaxIterations(NumericalError):
    def __init__(self, message, x=None, gap=None):
        super().__init__(message)
        self.x = x
        self.gap = gap


class BisectionStall(NumericalError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ZeroGamma(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class ZeroDenominator(NumericalError):
    pass


class LengthMismatch(InputError):
    pass


class HeaderMismatch(InputError):
    pass


class NonMonotoneTime(InputError):
    pass
