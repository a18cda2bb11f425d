"""Exception types raised across the package."""


class HawkesFlowError(Exception):
    """Base class for every error raised by hawkesflow."""


class InvalidParameters(HawkesFlowError, ValueError):
    pass


class WrongKernelForm(HawkesFlowError, ValueError):
    pass


class MixedKernelForms(HawkesFlowError, ValueError):
    pass


class OutOfSession(HawkesFlowError, ValueError):
    pass


class ReversedInterval(HawkesFlowError, ValueError):
    pass


class UnsortedHistory(HawkesFlowError, ValueError):
    pass


class TimeRegression(HawkesFlowError, ValueError):
    pass


class InsufficientEvents(HawkesFlowError, ValueError):
    pass


class TooFewSamples(HawkesFlowError, ValueError):
    pass


class MissingField(HawkesFlowError, ValueError):
    pass


class ConfigError(HawkesFlowError, ValueError):
    pass


class NonStationaryModel(HawkesFlowError, ValueError):
    """Simulation was asked to run an explosive model without an override."""

    def __init__(self, radius: float):
        super().__init__(f"model is not stationary: spectral radius {radius:.6g} >= 1")
        self.radius = radius


class CapExceeded(HawkesFlowError, RuntimeError):
    """Thinning produced more events than the configured safety cap."""

    def __init__(self, cap: int, radius: float):
        super().__init__(
            f"simulation exceeded max_events={cap} "
            f"(spectral radius {radius:.6g}; near-critical or explosive parameters?)"
        )
        self.cap = cap
        self.radius = radius
