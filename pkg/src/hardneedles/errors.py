"""Exception types shared across modules."""


class NumericalError(RuntimeError):
    """A solver failed: blow-up, loss of positivity or non-convergence."""
