"""Exception hierarchy shared across the package."""


class BirdrError(Exception):
    """Base class for all library errors."""


# --- data ---------------------------------------------------------------


class ColumnNotFound(BirdrError):
    pass


class NonNumericColumn(BirdrError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(
            "non-numeric predictor column(s): " + ", ".join(self.columns)
        )


class TooFewRows(BirdrError):
    pass


class DegenerateData(BirdrError):
    pass


class ShapeMismatch(BirdrError):
    pass


class InvalidSpec(BirdrError):
    pass


# --- gp -----------------------------------------------------------------


class FactorizationFailure(BirdrError):
    pass


class NonFiniteObjective(BirdrError):
    pass


class ZeroVariance(BirdrError):
    pass


class ModelParseError(BirdrError):
    pass


class NoiseOnlyWarning(UserWarning):
    """Response is constant; the GP fit degenerates to pure noise."""


# --- inference ----------------------------------------------------------


class UnsupportedOperation(BirdrError):
    pass


class NonFiniteTarget(BirdrError):
    pass


class AllWeightsZero(BirdrError):
    pass


class TooFewSamples(BirdrError):
    pass


class LowEssWarning(UserWarning):
    """Importance-sampling effective sample size is below the alert threshold."""


# --- dr -----------------------------------------------------------------


class TooManySlices(BirdrError):
    pass


class SliceTooSmall(BirdrError):
    pass


class EigenFailure(BirdrError):
    pass


class SingularTrueBasis(BirdrError):
    pass


class SingularBasis(BirdrError):
    pass


class DegenerateGapWarning(UserWarning):
    """Eigen-gap at the requested subspace dimension is numerically zero."""


class SliceReducedWarning(UserWarning):
    """Slice count was reduced to keep at least two points per slice."""


# --- bench --------------------------------------------------------------


class NonPositiveResponse(BirdrError):
    pass


class InsufficientData(BirdrError):
    pass


class RankDeficient(BirdrError):
    pass


class ZeroResponse(BirdrError):
    pass


class RidgeFallbackWarning(UserWarning):
    """Least-squares design was rank deficient; a tiny ridge was applied."""


# --- cli ----------------------------------------------------------------


class ConfigError(BirdrError):
    pass
