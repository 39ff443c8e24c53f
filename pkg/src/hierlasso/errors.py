"""Exception types shared across the package."""


class HierLassoError(Exception):
    """Base class for all package-specific errors."""


class DuplicateParentError(HierLassoError):
    """A DRG is listed under two different MDCs."""


class UnknownDrgError(HierLassoError):
    """A DRG label does not appear in the hierarchy."""


class EmptyDataError(HierLassoError):
    """Dataset has no rows or no columns."""


class LabelMismatchError(HierLassoError):
    """Subgroup label vector length differs from the number of rows."""


class DimensionMismatchError(HierLassoError):
    """Array shapes do not agree."""


class StaleCacheError(HierLassoError):
    """Linear-predictor cache was not refreshed after a coefficient change."""


class DegenerateResponseError(HierLassoError):
    """Response vector contains a single class."""


class SingleClassError(HierLassoError):
    """Metric undefined because labels contain one class only."""


class NoPositivesError(HierLassoError):
    """Precision-recall metric undefined without positive labels."""


class AllGroupsSkippedError(HierLassoError):
    """Every subgroup was single-class; no summary possible."""


class InfeasibleFoldsError(HierLassoError):
    """A response class has fewer members than the number of folds."""


class CalibrationFailedError(HierLassoError):
    """Intercept calibration bisection exhausted its bracket."""


class MalformedCsvError(HierLassoError):
    """Input CSV could not be parsed into the expected shape."""


class MissingColumnError(HierLassoError):
    """A required column (y or drg) is absent from the input CSV."""


class NonBinaryOutcomeError(HierLassoError):
    """Outcome column contains values other than 0/1."""


class MissingCovariateError(HierLassoError):
    """Prediction data lacks a covariate the model requires."""
