class DataError(ValueError):
    """Input data is malformed, incomplete or inconsistent."""


class SchemaMismatchError(DataError):
    """A checkpoint and a dataset disagree on tenor grid or families."""


class RankError(DataError):
    """A least-squares design matrix is (numerically) rank deficient."""


class NumericalError(FloatingPointError):
    """A computation produced NaN/Inf or otherwise broke down."""
