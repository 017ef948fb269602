"""Exception hierarchy.

Three broad classes matter to callers (and map to CLI exit codes):
input validation problems, file/format problems, and numerical
degeneracies that arise during estimation.
"""


class MicrocorrError(Exception):
    """Base class for all package errors."""


class ValidationError(MicrocorrError, ValueError):
    """Invalid argument values or shapes detected before any computation."""


class ConformabilityError(ValidationError):
    """Two inputs that must share dimensions do not."""


class TableFormatError(MicrocorrError):
    """A data file could not be parsed into the expected table layout."""


class NumericalError(MicrocorrError):
    """Estimation failed for a numerical reason (degenerate inputs)."""


class DegenerateDirectionError(NumericalError):
    """A quadratic form v'Phi v is not positive: the outcome carries no
    detectable microbial signal in the fitted direction."""


class SingularPhiError(NumericalError):
    """The residual covariance matrix is singular or too ill-conditioned
    to invert."""


class AllTruncatedError(NumericalError):
    """Every subject fell below the density cutoff; nothing left to fit."""


class VanishingDenominatorError(NumericalError):
    """A kernel weight sum underflowed to zero (or went nonpositive for a
    higher-order kernel) at some evaluation point."""


class InternalConsistencyError(NumericalError):
    """An invariant that should hold by construction was violated,
    indicating a bug rather than bad data."""


class EstimationError(NumericalError):
    """Too many sample splits failed for a result to be reported."""
