"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Rejected input: violated precondition, bad schema, or malformed config."""


class NonConvergenceError(RuntimeError):
    """An iterative solve (shooting, eigeniteration, Newton) failed to converge."""
