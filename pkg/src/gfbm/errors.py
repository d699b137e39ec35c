"""Exception hierarchy shared by the kernel, samplers, estimators and CLI."""


class GfbmError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(GfbmError, ValueError):
    """Invalid process parameters (a, b, H)."""


class DomainError(GfbmError, ValueError):
    """An argument lies outside the domain of the requested quantity."""


class DegenerateDistributionError(DomainError):
    """The requested density belongs to a point mass (zero variance)."""


class GridError(GfbmError, ValueError):
    """Malformed time grid, or a grid the chosen method cannot handle."""


class MethodMismatchError(GridError):
    """The requested sampling method does not fit the call or the grid."""


class ParamsMismatchError(GfbmError, ValueError):
    """Analytic parameters disagree with the ensemble's provenance."""


class NumericalError(GfbmError, RuntimeError):
    """A numerical procedure (factorization, embedding) broke down."""


class NotPositiveDefiniteError(NumericalError):
    """Cholesky factorization failed even at the largest jitter level."""


class EmbeddingError(NumericalError):
    """The circulant embedding kept a negative spectrum up to the size cap."""
