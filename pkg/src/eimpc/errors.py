"""Exception hierarchy shared by all modules."""


class EimpcError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(EimpcError, ValueError):
    pass


class NonConvergenceError(EimpcError, RuntimeError):
    """An iterative routine (DARE, invariant set) did not converge."""


class CertificatePreconditionError(EimpcError, ValueError):
    """Duality gap requested for an infeasible primal or dual point."""


class InfeasibleError(EimpcError):
    """The QP at the given state has no feasible point (x is outside X_0)."""


class IterationLimitError(EimpcError, RuntimeError):
    pass


class RecursiveFeasibilityError(EimpcError, RuntimeError):
    """A closed-loop trajectory left the feasible set mid-run."""


class TrainingDivergenceError(EimpcError, RuntimeError):
    pass


class FormatError(EimpcError, ValueError):
    """Malformed serialized file. ``offset`` is the byte position, if known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
