"""Exception types shared across the package."""


class SmoothingLabError(Exception):
    """Base class for all package errors."""


class InvalidModel(SmoothingLabError):
    """Weight model parameters are malformed."""


class NoRootInBracket(SmoothingLabError):
    """m(theta) - 1 has constant sign on the scan grid."""


class StochasticAmbiguity(SmoothingLabError):
    """Monte Carlo noise prevents a sign decision at the requested tolerance."""


class GenerationMissing(SmoothingLabError):
    """Requested generation was never grown."""


class PopulationCapExceeded(SmoothingLabError):
    """A generation would exceed the population cap.

    Carries the partially grown tree (or partial statistics) in ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class StepCapExceeded(SmoothingLabError):
    """A walk or line construction did not close within the step cap.

    Carries the partial object in ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NotNormalized(SmoothingLabError):
    """Increment law construction requires m(alpha) = 1 within tolerance."""


class NoEnvelope(SmoothingLabError):
    """Rejection sampling is impossible without an envelope constant."""


class EmptySamples(SmoothingLabError):
    """An operation received an empty sample set."""


class DegenerateInput(SmoothingLabError):
    """Input function carries no usable information (e.g. f == 1 on the grid)."""


class DegenerateGrid(SmoothingLabError):
    """Grid has no points in the range required by the operation."""


class InvalidIndex(SmoothingLabError):
    """Stable index outside (0, 1)."""


class ConfigError(SmoothingLabError):
    """Experiment configuration is malformed."""
