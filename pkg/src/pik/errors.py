"""Exception hierarchy shared by all modules."""


class PikError(Exception):
    """Base class for every error raised by this package."""


class ModelError(PikError, ValueError):
    pass


class NonStochasticPrior(ModelError):
    pass


class NegativeDensity(ModelError):
    pass


class ClassArityMismatch(ModelError):
    pass


class UnknownTypeReference(ModelError):
    pass


class ZeroDensityFactor(ModelError):
    pass


class SamePositionError(ModelError):
    pass


class UnknownBuiltin(ModelError):
    pass


class InvalidParams(ModelError):
    pass


class DensityExceedsOne(PikError, ValueError):
    pass


class BracketError(PikError, ValueError):
    pass


class SubcriticalModel(PikError):
    pass


class TreeExplosion(PikError, RuntimeError):
    pass


class DegenerateNormalizer(PikError, ArithmeticError):
    pass


class DimensionMismatch(PikError, ValueError):
    pass


class NoConvergence(PikError, RuntimeError):
    """Raised when an iterative solver misses its tolerance.

    ``result`` carries the best iterate so callers may still use it.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class TooLargeForOracle(PikError, ValueError):
    pass


class DescentExhausted(PikError, RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NotApplicable(PikError):
    pass
