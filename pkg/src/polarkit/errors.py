"""Exception types shared across the package."""


class PolarkitError(Exception):
    """Base class for all package-specific errors."""


class SingularMatrix(PolarkitError):
    """A GF(2) matrix that was required to be invertible is singular."""


class NotPolarizing(PolarkitError):
    """Kernel fails the polarization criterion (triangular under a column permutation)."""


class DimensionTooLarge(PolarkitError):
    """Kernel dimension exceeds the supported bound for the requested operation."""


class DomainError(PolarkitError):
    """Scalar argument outside the mathematical domain of the operation."""


class BudgetExceeded(PolarkitError):
    """Requested enumeration exceeds the configured node budget."""


class AssumptionUnmet(PolarkitError):
    """A structural assumption required by a bound does not hold for this kernel."""


class RequiresExactCdf(PolarkitError):
    """Operation needs an exactly enumerated level, not a Monte Carlo estimate."""


class PrefixTooDeep(PolarkitError):
    """Hybrid prefix depth is incompatible with the requested block length."""


class MismatchedLevel(PolarkitError):
    """Two objects built for different (n, ell) levels were combined."""


class IndexOutOfRange(PolarkitError):
    """Channel index outside 1..ell^n."""


class DegenerateVariance(PolarkitError):
    """Second exponent is zero where a nonzero variance is required."""


class FrozenBitNonzero(PolarkitError):
    """Encoder input carries a nonzero value on a frozen position."""
