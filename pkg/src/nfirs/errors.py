"""Exception and warning types raised across the package."""


class NfirsError(Exception):
    """Base class for all package errors."""


class ConfigError(NfirsError, ValueError):
    pass


class InvalidMode(NfirsError, ValueError):
    pass


class ShapeMismatch(NfirsError, ValueError):
    pass


class IndexOutOfRange(NfirsError, IndexError):
    pass


class UniquenessViolation(NfirsError, ValueError):
    """min((P-1)*T_a, Q) < L: the CP model is not identifiable."""


class EstimationError(NfirsError, RuntimeError):
    """A numerical failure inside the estimator. Sweeps count these as failed trials."""


class RankDeficient(EstimationError):
    pass


class IllConditioned(EstimationError):
    pass


class SingularKhatriRao(EstimationError):
    pass


class ZeroReference(NfirsError, ZeroDivisionError):
    pass


class SingularFim(NfirsError, RuntimeWarning):
    """Emitted (as a warning) when the Fisher matrix had to be regularized."""
