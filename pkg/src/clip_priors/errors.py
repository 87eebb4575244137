"""Exception hierarchy for the prior-generation engine."""


class PriorError(Exception):
    """Base class for all engine errors."""


class BundleError(PriorError):
    """Base class for bundle validation / IO errors."""


class MissingArray(BundleError):
    """Manifest names an array whose payload file is absent."""


class ShapeMismatch(BundleError):
    """Declared shape disagrees with the payload byte count, or operands disagree."""


class NonFinite(BundleError):
    """NaN or Inf found in a tensor."""


class EmptyMask(BundleError):
    """A support mask has no foreground pixels."""


class DimMismatch(BundleError):
    """Text embedding dimensionality differs from the visual feature dimensionality."""


class NegativeAttention(BundleError):
    """An attention map contains negative entries."""


class IoFailure(PriorError):
    """Filesystem read/write failed."""


class ZeroVector(PriorError):
    """An operation requiring nonzero vectors received a zero-norm input."""


class BadRange(PriorError):
    """A parameter is outside its valid range (e.g. block count l > n)."""


class DegenerateMatrix(PriorError):
    """Sinkhorn normalization cannot proceed (zero row or column)."""
