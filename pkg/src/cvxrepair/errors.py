"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Malformed or non-finite input, dimension mismatch, bad parameters."""


class DomainError(ValueError):
    """Operation requested outside the regime where it is defined."""


class PreconditionError(ValueError):
    """A required hypothesis (e.g. a Slater point) is missing."""


class UnsupportedSizeError(ValueError):
    """Instance exceeds the size cap of a brute-force routine."""


class ConvergenceError(RuntimeError):
    """An iterative routine exhausted its budget.

    ``best`` carries the best iterate (or partial result) found so far.
    """

    def __init__(self, message, best=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.iterations = iterations
