"""Exception types shared across spdkit."""


class SpdKitError(Exception):
    """Base class for all spdkit errors."""


class InvalidInput(SpdKitError):
    """An argument violates a precondition (shape, finiteness, range)."""


class DimensionMismatch(InvalidInput):
    """Two operands do not share a compatible dimension."""


class InvalidDataset(InvalidInput):
    """A labeled dataset violates its structural invariants."""


class CorruptFile(SpdKitError):
    """A dataset or model file failed magic/version/size validation."""


class NotPositiveDefinite(SpdKitError):
    """A matrix required to be SPD has an eigenvalue at or below tolerance."""


class DegenerateDivergence(SpdKitError):
    """The argument of a log-det turned non-positive during a divergence."""


class NumericalBreakdown(SpdKitError):
    """A factorization or gradient evaluation produced non-finite values."""


class StepOverflow(SpdKitError):
    """A retraction step is large enough to overflow the matrix exponential."""


class InvalidStart(SpdKitError):
    """The optimizer was started at a point with a non-finite objective."""


class InvalidGradient(SpdKitError):
    """A gradient passed to an optimizer step contains non-finite entries."""


class SingularSystem(SpdKitError):
    """A linear system that should be regularized is singular."""
