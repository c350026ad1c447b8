"""Exception types shared across the package."""


class KbalanceError(Exception):
    """Base class for all errors raised by kbalance."""


class DataError(KbalanceError):
    """Invalid or degenerate input data (missing values, constant columns, ...)."""


class NotPSDError(KbalanceError):
    """A kernel matrix failed the positive semi-definiteness check."""


class InfeasibleBalanceError(KbalanceError):
    """No feasible set of balancing weights exists for the requested targets."""


class BenchmarkFetchError(KbalanceError):
    """Benchmark data could not be downloaded or validated."""
