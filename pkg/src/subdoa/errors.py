"""Exception types shared across the package."""


class SubdoaError(Exception):
    """Base class for all package-specific errors."""


class InvalidInput(SubdoaError):
    """An argument violates a documented precondition."""


class NumericalFailure(SubdoaError):
    """An iterative routine did not converge or a factorization collapsed."""


class IllConditioned(SubdoaError):
    """A linear system is too ill-conditioned to solve reliably."""


class DegenerateReference(SubdoaError):
    """The reference channel entry of a vector is numerically zero."""


class DegenerateAlpha(SubdoaError):
    """The least-squares scaling coefficient is numerically zero."""


class FormatError(SubdoaError):
    """A file does not match the expected on-disk format."""
