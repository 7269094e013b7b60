"""Exception hierarchy shared by all modules."""


class FinslerError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(FinslerError, ValueError):
    pass


class SingularPointError(FinslerError, ValueError):
    """Evaluation requested at a point where the quantity is not defined (usually 0)."""


class RegularityError(FinslerError, ValueError):
    """The gauge is not differentiable (or not C^2) at the requested point."""

    def __init__(self, message, coordinate=None):
        super().__init__(message)
        self.coordinate = coordinate


class ConvergenceError(FinslerError, RuntimeError):
    def __init__(self, message, best_value=None, residual=None):
        super().__init__(message)
        self.best_value = best_value
        self.residual = residual


class AmbiguityError(FinslerError, RuntimeError):
    """Two distinct maximizers reached the same dual value."""


class StratumError(FinslerError, ValueError):
    """Point lies on an edge or vertex of the cone (two or more active facets)."""


class PlacementError(FinslerError, ValueError):
    """A center or stencil is placed where the construction does not allow it."""


class DegeneracyError(FinslerError, ValueError):
    """Gradient vanishes on a finite-difference stencil."""


class EmptyLevelError(FinslerError, ValueError):
    pass


class QuadratureError(FinslerError, RuntimeError):
    def __init__(self, message, value=None, err=None):
        super().__init__(message)
        self.value = value
        self.err = err


class HypothesisError(FinslerError, ValueError):
    """A test function does not satisfy the vanishing hypothesis of the inequality."""


class UnsupportedShapeError(FinslerError, ValueError):
    pass


class ConfigError(FinslerError, ValueError):
    pass
