"""Exception hierarchy.

Every error raised on purpose by latentlab derives from :class:`LatentLabError`.
Errors signalling a bad argument also derive from :class:`ValueError` so that
callers following the usual numpy/sklearn conventions keep working.
"""


class LatentLabError(Exception):
    """Base class for all latentlab errors."""


class DomainError(LatentLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class DimensionError(LatentLabError, ValueError):
    """Array shapes are incompatible."""


class TieError(DomainError):
    """A hyperplane label is exactly zero; the caller must resample."""


class RegimeError(DomainError):
    """Parameters fall outside the regime where a formula is defined."""


class ConstructionError(LatentLabError):
    """A random structure could not be built within the attempt budget."""


class InfeasibleError(LatentLabError):
    """A linear program has no feasible point."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class SolverError(LatentLabError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class ConvergenceError(LatentLabError):
    """An optimiser exhausted its budget; ``best`` carries the best iterate."""

    def __init__(self, message, best=None, gap=None):
        super().__init__(message)
        self.best = best
        self.gap = gap


class DegenerateSampleError(DomainError):
    """The sample produces a zero vector that cannot be normalised."""


class InsufficientDataError(LatentLabError):
    """Too few observations to produce a meaningful estimate."""


class DataInconsistencyError(LatentLabError):
    """Training data contradicts itself (e.g. two labels for one latent)."""


class LatentSpaceTooLargeError(DomainError):
    """The latent space is too large to enumerate exactly."""

