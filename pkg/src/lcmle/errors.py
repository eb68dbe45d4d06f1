"""Exception hierarchy shared across the package."""


class LcmleError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(LcmleError, ValueError):
    """Point or model dimensions disagree."""


class DegenerateInput(LcmleError, ValueError):
    """Input points lie in a proper affine subspace."""


class DegenerateSimplex(LcmleError, ValueError):
    """Simplex has (numerically) zero volume."""


class InfeasibleBudget(LcmleError, ValueError):
    """Facet budget below the d+1 minimum for a bounded polytope."""


class RegionTooSmall(LcmleError, ValueError):
    """Truncation region does not contain the density support."""


class BudgetTooSmall(LcmleError, ValueError):
    """Monte Carlo budget below the supported minimum."""


class BudgetExceeded(LcmleError, ValueError):
    """Requested search size exceeds the brute-force limit."""


class InsufficientPoints(LcmleError, ValueError):
    """Too few points for the requested fit."""


class NonPositiveValue(LcmleError, ValueError):
    """Log-scale fit requires strictly positive values."""


class DomainError(LcmleError, ValueError):
    """Scalar parameter outside its valid range."""


class EmptyResult(LcmleError, ValueError):
    """No rows available for the requested operation."""


class UnsupportedDensity(LcmleError, TypeError):
    """Operation not defined for this density family."""


class UnsupportedDimension(LcmleError, ValueError):
    """Operation implemented only for specific dimensions."""


class NonFinite(LcmleError, ValueError):
    """A required expectation or function value is not finite."""
