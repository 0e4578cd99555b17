"""Exception types raised across the package."""


class FilterStabError(Exception):
    """Base class for all package errors."""


class MismatchedSupport(FilterStabError, ValueError):
    pass


class NotAbsolutelyContinuous(FilterStabError, ValueError):
    """The true prior puts mass where the filter prior has none."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class ZeroMass(FilterStabError, ValueError):
    pass


class NonFiniteResult(FilterStabError, ArithmeticError):
    pass


class BadStochasticMatrix(FilterStabError, ValueError):
    pass


class UnsupportedNoiseFamily(FilterStabError, ValueError):
    pass


class NoConvergence(FilterStabError, RuntimeError):
    pass


class ZeroLikelihood(FilterStabError, ArithmeticError):
    """The filter normalizer vanished (0/0 in the Bayes update)."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ZeroRho(FilterStabError, ArithmeticError):
    pass


class MassLeak(FilterStabError, ValueError):
    pass


class TooLarge(FilterStabError, ValueError):
    pass


class MomentDivergence(FilterStabError, ArithmeticError):
    pass


class CharZero(FilterStabError, ValueError):
    pass


class DegenerateSeries(FilterStabError, ValueError):
    pass


class ConfigInvalid(FilterStabError, ValueError):
    """Configuration failed validation; ``field`` is a dotted path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class PartialFailure(FilterStabError, RuntimeError):
    def __init__(self, message, failed_trials=(), manifest=None):
        super().__init__(message)
        self.failed_trials = list(failed_trials)
        self.manifest = manifest
