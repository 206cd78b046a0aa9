"""Exception hierarchy shared by all kdvlayer modules."""


class KdVLayerError(Exception):
    """Base class for every error raised by this package."""


class AdmissibleRangeError(KdVLayerError, ValueError):
    """A state value (or a segment of values) left the admissible interval J."""


class ModelConsistencyError(KdVLayerError):
    """The flux model violates its own hypotheses (e.g. F > 0 or a singular operator)."""


class CoverageError(KdVLayerError, ValueError):
    """A fast-variable grid does not cover the requested physical domain."""


class DegenerateFitError(KdVLayerError, ValueError):
    """A decay fit was requested on a numerically zero profile."""


class LifespanExceededError(KdVLayerError):
    """Characteristics could not be traced (Newton failed or t beyond the lifespan)."""


class NearBlowupError(LifespanExceededError):
    """The characteristic Jacobian dropped below its safety floor."""


class StabilityError(KdVLayerError):
    """The explicit part of the time stepper violates its CFL bound."""


class DivergenceError(KdVLayerError):
    """The remainder left its admissibility envelope."""


class ThresholdCrossedError(KdVLayerError):
    """The weighted energy exceeded the continuous-induction threshold eps**2."""

    def __init__(self, message, t=None, energy=None):
        super().__init__(message)
        self.t = t
        self.energy = energy


class ConfigError(KdVLayerError, ValueError):
    """Run configuration failed schema or semantic validation."""
