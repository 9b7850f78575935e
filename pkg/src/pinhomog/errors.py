"""Exception hierarchy shared by all pinhomog modules."""


class PinhomogError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(PinhomogError, ValueError):
    """A caller passed a value outside the documented domain."""


class ScalingError(InvalidArgumentError):
    """The (epsilon, delta) pair violates the declared scaling rule."""


class MeshError(PinhomogError):
    """Invalid mesh topology or geometry."""


class LayoutError(PinhomogError):
    """A perforation layout violates geometric requirements."""


class ResourceBudgetError(PinhomogError):
    """Refinement exceeded the configured vertex budget."""


class InadmissibleStateError(PinhomogError):
    """A deformation state left the admissible set (e.g. det(grad y) <= 0)."""


class ConvergenceError(PinhomogError):
    """The minimizer hit its iteration cap before reaching tolerance.

    Carries the last iterate and gradient norm for diagnostics.
    """

    def __init__(self, message, last_iterate=None, grad_norm=None, energy=None,
                 trace=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.grad_norm = grad_norm
        self.energy = energy
        self.trace = trace


class IllPosedError(PinhomogError):
    """The discrete energy appears unbounded below."""


class DataError(PinhomogError):
    """Input data inconsistent with what the operation assumes."""


class ConfigError(PinhomogError):
    """Configuration file or override problem; message names the key."""
