"""Exception types shared across the package.

Everything raised for a domain-level reason derives from KmshrinkError so
the experiment harness can distinguish recoverable estimator failures
(recorded per replicate) from programming errors (propagated).
"""


class KmshrinkError(Exception):
    """Base class for package-specific failures."""


class InsufficientSampleError(KmshrinkError, ValueError):
    """An operation needs more sample points than were provided."""


class DegenerateGramError(KmshrinkError, ValueError):
    """The Gram matrix carries no usable signal for the request."""


class DegenerateBandwidthError(KmshrinkError, ValueError):
    """The median heuristic produced a zero bandwidth."""


class PreconditionError(KmshrinkError, ValueError):
    """A closed-form selector's standing assumption does not hold."""


class NumericalError(KmshrinkError, RuntimeError):
    """A linear-algebra factorization failed."""

    def __init__(self, message: str, *, lam: float | None = None, n: int | None = None):
        super().__init__(message)
        self.lam = lam
        self.n = n


class SingularLeaveOneOutError(KmshrinkError, RuntimeError):
    """A leave-one-out fold is singular at the requested shrinkage level."""

    def __init__(self, message: str, *, index: int, lam: float):
        super().__init__(message)
        self.index = index
        self.lam = lam


class SelectionError(KmshrinkError, RuntimeError):
    """No grid candidate produced a usable score."""


class ClassSizeError(KmshrinkError, ValueError):
    """A class has too few points to train on."""


class DataError(KmshrinkError, ValueError):
    """An input dataset is malformed."""


class ConfigError(KmshrinkError, ValueError):
    """A config file failed validation."""
