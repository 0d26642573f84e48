"""Exception types shared across the package."""


class RdtrialsError(Exception):
    """Base class for all package errors."""


class DatasetError(RdtrialsError):
    """Structural problem in input data (bad CSV row, violated invariant)."""


class SeparationError(RdtrialsError):
    """Probit likelihood is unbounded (perfect or quasi-complete separation)."""


class ConvergenceError(RdtrialsError):
    """Iterative optimizer did not reach its tolerance within the iteration cap."""


class EstimabilityError(RdtrialsError):
    """A requested quantity is not estimable from the data at hand."""


class InsufficientDonorsError(RdtrialsError):
    """Imputation method lacks the observed data it needs to build its draw model."""
