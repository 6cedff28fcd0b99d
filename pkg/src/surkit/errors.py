"""Exception hierarchy shared across the toolkit."""


class SurkitError(Exception):
    """Base class for all errors raised by surkit."""


class EmptySamplesError(SurkitError):
    """Raised when a JND sample list is empty."""


class SampleOffGridError(SurkitError):
    """Raised when a JND sample does not lie on the distortion grid."""

    def __init__(self, value):
        super().__init__(f"sample {value!r} is not on the distortion grid")
        self.value = value


class InvalidThresholdError(SurkitError):
    """Raised when a SUR threshold p lies outside (0, 1]."""

    def __init__(self, p):
        super().__init__(f"threshold p={p!r} must lie in (0, 1]")
        self.p = p


class InvalidParamsError(SurkitError):
    """Raised when a model parameter vector violates its family's constraints."""


class NonMonotoneModelError(SurkitError):
    """Raised when a sampled model curve increases along the grid."""


class DegenerateCurveError(SurkitError):
    """Raised when a curve is flat everywhere and carries no fit information."""


class GridMismatchError(SurkitError):
    """Raised when two curves do not share the same distortion grid."""


class EmptyInputError(SurkitError):
    """Raised when an aggregate is requested over an empty collection."""


class QPInfeasibleError(SurkitError):
    """Raised if the monotone-polynomial QP reports infeasibility (cannot occur)."""


class EmptyMatrixError(SurkitError):
    """Raised when a feature matrix has no rows."""


class DimensionMismatchError(SurkitError):
    """Raised when feature/target dimensions disagree."""


class InvalidHyperparamsError(SurkitError):
    """Raised when SVR hyperparameters violate positivity constraints."""


class TooFewItemsError(SurkitError):
    """Raised when a dataset is too small to split into the requested folds."""


class MissingPvsFeaturesError(SurkitError):
    """Raised when a predictor mode requires per-QP quality-degradation vectors."""


class UnknownQpError(SurkitError):
    """Raised when a QP level is not covered by a record's quality vectors."""

    def __init__(self, qp):
        super().__init__(f"no quality-degradation vector for qp={qp!r}")
        self.qp = qp


class UnconvergedFitError(SurkitError):
    """Raised when too few converged fits remain to train a predictor."""
