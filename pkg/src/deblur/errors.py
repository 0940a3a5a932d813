"""Exception types raised across the package.

Every exception derives from :class:`DeblurError`; most also derive from
``ValueError`` because they signal a bad argument.
"""


class DeblurError(Exception):
    """Base class for all package errors."""


# image-core
class LengthMismatch(DeblurError, ValueError):
    pass


class ZeroReference(DeblurError, ValueError):
    pass


class MalformedFile(DeblurError, ValueError):
    pass


# psf-model
class InvalidSpread(DeblurError, ValueError):
    pass


class UnsupportedSize(DeblurError, ValueError):
    pass


# blur-operators
class KernelTooWide(DeblurError, ValueError):
    pass


class IncompatibleVariant(DeblurError, ValueError):
    pass


class DimensionMismatch(DeblurError, ValueError):
    pass


class TooLarge(DeblurError, ValueError):
    """A dense realization was requested beyond the size guard."""


# noise-models
class ZeroSignal(DeblurError, ValueError):
    pass


class NegativeIntensity(DeblurError, ValueError):
    pass


class BadFraction(DeblurError, ValueError):
    pass


# svd-filter
class NotSeparable(DeblurError, ValueError):
    pass


class SingularOperator(DeblurError, ValueError):
    pass


# regularization
class BadSize(DeblurError, ValueError):
    pass


class NullSpaceOverlap(DeblurError, ValueError):
    """N(A) and N(L) share a nonzero vector, so the penalized problem is not unique."""


class WrongVariant(DeblurError, ValueError):
    pass


class NotConverged(DeblurError, RuntimeError):
    pass


# param-select
class BadGrid(DeblurError, ValueError):
    pass


class TooFewPoints(DeblurError, ValueError):
    pass


class FlatCurve(DeblurError, ValueError):
    pass


class NotBracketed(DeblurError, ValueError):
    pass


# multilevel
class OddDimension(DeblurError, ValueError):
    pass


class NotPowerOfTwo(DeblurError, ValueError):
    pass


class TooDeep(DeblurError, ValueError):
    pass
