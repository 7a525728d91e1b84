"""Exception hierarchy shared by all modules."""


class NelsonLabError(Exception):
    """Base class for every error raised by the package."""


class InvalidPotentialError(NelsonLabError, ValueError):
    pass


class ConvergenceError(NelsonLabError, RuntimeError):
    """Iterative solver ran out of budget.

    ``residual`` is the best residual reached and ``history`` the residual
    estimates collected on the way (may be empty).
    """

    def __init__(self, message, residual=float("nan"), history=()):
        super().__init__(message)
        self.residual = residual
        self.history = list(history)


class ClassViolationError(NelsonLabError, ValueError):
    def __init__(self, message, worst_node=None, worst_value=None):
        super().__init__(message)
        self.worst_node = worst_node
        self.worst_value = worst_value


class DecayOverflowError(NelsonLabError, OverflowError):
    pass


class CutoffOrderError(NelsonLabError, ValueError):
    pass


class CapacityError(NelsonLabError, MemoryError):
    def __init__(self, message, dim):
        super().__init__(message)
        self.dim = dim


class ProvenanceError(NelsonLabError, ValueError):
    pass


class ShiftTooSmallError(NelsonLabError, ArithmeticError):
    """Shifted operator is not positive definite along some search direction."""

    def __init__(self, message, rayleigh_quotient):
        super().__init__(message)
        self.rayleigh_quotient = rayleigh_quotient


class DiagnosticsError(NelsonLabError, RuntimeError):
    pass


class InfeasibleDecayError(NelsonLabError, ValueError):
    def __init__(self, message, margin):
        super().__init__(message)
        self.margin = margin


class UnsupportedPotentialError(NelsonLabError, ValueError):
    pass


class ConfigError(NelsonLabError, ValueError):
    pass
