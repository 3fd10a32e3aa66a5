"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` for bad inputs and
:class:`NumericalError` for computations that ran but cannot be trusted.
"""


class GratingError(Exception):
    """Base class for all package errors."""


class ValidationError(GratingError, ValueError):
    pass


class NumericalError(GratingError, ArithmeticError):
    pass


class AnomalousSpecularOrder(NumericalError):
    """The zeroth order is grazing (beta_0 = 0); efficiencies are undefined."""


class IllConditioned(NumericalError):
    pass


class ResidualExceeded(NumericalError):
    pass


class CurvesIntersect(ValidationError):
    pass


class ResolutionTooLow(ValidationError):
    pass


class LinearizationSingular(NumericalError):
    pass


class BandRangeExceeded(NumericalError):
    pass


class NyquistViolated(ValidationError):
    pass


class RankOneDefectHigh(NumericalError):
    pass


class FrequenciesIncommensurate(NumericalError):
    pass


class Diverged(NumericalError):
    pass


class ExcludedAngleWarning(UserWarning):
    """Incident angle with k sin(theta) L / pi integral; retrieval is not unique."""


class BelowReferenceHeightWarning(UserWarning):
    pass
