"""Exception types raised across the package.

Every error carries a short machine-readable name (the class name) so the
command-line front end can report it and pick an exit code.
"""


class BundleOptError(Exception):
    """Base class for all package errors."""


class ParameterOutOfRange(BundleOptError):
    pass


class NonPositiveDensity(BundleOptError):
    pass


class EvalOutsideSupport(BundleOptError):
    pass


class NotRegular(BundleOptError):
    pass


class NotRegular1D(BundleOptError):
    pass


class NotReversedRegular(BundleOptError):
    pass


class RegionOutsideSupport(BundleOptError):
    pass


class OverlappingRegions(BundleOptError):
    pass


class InfeasibleUBar(BundleOptError):
    pass


class OutOfDomain(BundleOptError):
    pass


class BranchExhausted(BundleOptError):
    """No u-bar family produced a candidate passing the FOC/SOC checks.

    The best candidate found is attached as ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class PreconditionFailed(BundleOptError):
    pass


class NoConvergence(BundleOptError):
    """Iterative method stopped before meeting its tolerance.

    The last iterate is attached as ``last``.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class SizeTooLarge(BundleOptError):
    pass


class DimensionTooLarge(BundleOptError):
    pass


class UnsupportedAllocationSpace(BundleOptError):
    pass


class DerivativeUnavailable(BundleOptError):
    pass


class ConfigInvalid(BundleOptError):
    pass
