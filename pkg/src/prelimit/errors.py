"""Exception types shared across the package."""


class PrelimitError(Exception):
    """Base class for all package-specific errors."""


class GridIndexError(PrelimitError):
    """A lattice access fell outside the truncation box."""


class DomainError(PrelimitError):
    """An evaluation point is outside the interpolation domain."""


class SamplingError(PrelimitError):
    """A constrained sampler failed to produce an in-class function."""


class SolverError(PrelimitError):
    """A linear solve failed (singular beyond the known null space, etc.)."""


class StabilityError(PrelimitError):
    """Model parameters violate a stability requirement (e.g. rho >= 1)."""


class IntegrationError(PrelimitError):
    """A quadrature did not reach its requested tolerance."""
