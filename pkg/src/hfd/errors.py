"""Exception types shared across the package."""


class HfdError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(HfdError):
    """A dataset or constraint file could not be parsed."""


class InfeasibleRequest(HfdError):
    """The requested constraint sample cannot be drawn from the labels."""


class BadFoldCount(HfdError):
    """Cross-validation fold count outside [2, N]."""


class DimensionMismatch(HfdError):
    """Input row dimension does not match the model."""


class EmptyConstraintSet(HfdError):
    """An operation requiring constraint pairs received none."""


class EmptyCannotLink(HfdError):
    """The semi-supervised solver needs at least one cannot-link pair."""


class NumericalFailure(HfdError):
    """A numerical routine (eigensolve) did not converge."""


class NonFinite(HfdError):
    """NaN or Inf appeared in solver iterates; inputs are badly scaled."""


class TooFewPoints(HfdError):
    """Not enough points to honour the membership floor."""


class BadSubsetSize(HfdError):
    """Feature subset size outside [1, d]."""


class DegenerateSplit(HfdError):
    """Every candidate split routed all points to one side."""


class InsufficientCandidates(HfdError):
    """Approximate search gathered fewer candidates than requested neighbors."""


class UnlabeledData(HfdError):
    """The evaluation protocol requires labels."""


class LengthMismatch(HfdError):
    """Two label sequences have different lengths."""
