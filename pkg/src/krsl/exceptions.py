"""Exception hierarchy shared by all krsl modules."""


class KrslError(Exception):
    """Base class for every error raised by this package."""


class ParameterDomainError(KrslError, ValueError):
    """A numeric parameter lies outside its admissible domain."""


class EmptyDataError(KrslError, ValueError):
    """An estimator received no samples."""


class DegenerateDataError(KrslError, ValueError):
    """Data make a normalising denominator vanish (e.g. constant input)."""


class DimensionMismatchError(KrslError, ValueError):
    """Array shapes are inconsistent with each other."""


class RejectedSampleError(KrslError, ValueError):
    """A filter update was refused; the filter state is left unchanged."""


class DivergenceError(RejectedSampleError):
    """An update would have produced non-finite weights."""


class RankDeficiencyError(KrslError, ArithmeticError):
    """The weighted Gram matrix of a fixed-point iterate is (numerically) singular."""


class InapplicableRegimeError(KrslError, ValueError):
    """Assumptions behind a robustness bound do not hold for the given scenario."""


class QuadratureAccuracyError(KrslError, ArithmeticError):
    """Refining a quadrature rule changed the result beyond tolerance."""


class NoSolutionError(KrslError, ArithmeticError):
    """A root-finding bracket contains no sign change."""


class StabilityViolationError(KrslError, ArithmeticError):
    """A steady-state formula has a non-positive denominator."""


class ConfigError(KrslError, ValueError):
    """An experiment configuration failed validation."""
