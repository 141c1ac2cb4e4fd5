"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError` so that the command
line front end can map them to a dedicated exit code.
"""


class MarkovCovError(Exception):
    """Base class for all package errors."""


class NumericalError(MarkovCovError):
    """A computation could not be carried out on the given data."""


class KernelSpecError(NumericalError):
    """A kernel specification produced an invalid covariance matrix."""


class SamplingError(NumericalError):
    """The covariance could not be factorized for sampling."""


class DegenerateKernelError(NumericalError):
    """A covariance matrix has a zero or negative diagonal entry."""


class EstimationError(NumericalError):
    """A covariance estimator could not be computed."""


class NoiseIdentifiabilityError(EstimationError):
    """No bin holds two or more observations of the same curve."""


class DegenerateCorrelationError(NumericalError):
    """A partial correlation is undefined (zero residual variance).

    Attributes
    ----------
    index : int or None
        Grid index (0-based) of the conditioning point, when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class KrigingError(NumericalError):
    """The bordered kriging system is singular."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition
