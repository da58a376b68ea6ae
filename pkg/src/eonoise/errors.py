"""Exception hierarchy shared by all eonoise modules."""


class EonoiseError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(EonoiseError, ValueError):
    pass


class ConfigurationError(InvalidInputError):
    pass


class InsufficientDataError(InvalidInputError):
    pass


class UndefinedRatioError(InvalidInputError):
    pass


class DegenerateDesignError(EonoiseError):
    """Least-squares design matrix is rank deficient."""

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class DegenerateSweepError(DegenerateDesignError):
    pass


class FitFailureError(EonoiseError):
    """A fit did not produce an acceptable result.

    ``best_residual`` carries the lowest residual RMS seen, when known.
    """

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class InvalidModelError(FitFailureError):
    pass


class DatasetError(EonoiseError):
    pass


class VersionMismatchError(DatasetError):
    pass


class MalformedHeaderError(DatasetError):
    pass


class ShapeMismatchError(DatasetError):
    pass


class DependencyError(EonoiseError):
    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class HashMismatchError(EonoiseError):
    pass
