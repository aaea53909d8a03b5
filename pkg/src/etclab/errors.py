"""Exception hierarchy shared by all etclab modules."""


class EtcError(Exception):
    """Base class for all errors raised by etclab."""


class NumericalError(EtcError):
    """Base class for failures caused by the numerics of a run, not its inputs."""


class NumericalOverflow(NumericalError):
    pass


class NumericalFailure(NumericalError):
    pass


class ZenoDetected(NumericalError):
    """Two consecutive events were closer than the configured Zeno floor."""

    def __init__(self, last_event_time, message=None):
        self.last_event_time = float(last_event_time)
        super().__init__(message or f"Zeno behaviour after t = {self.last_event_time:.12g}")


class ThresholdExpired(EtcError):
    """The Lyapunov-decrease threshold 1 - sigma*(t - t_j) is no longer positive."""


class NotHurwitz(EtcError, ValueError):
    pass


class NoValidCandidate(EtcError):
    """Every candidate on a self-triggered grid is already triggered."""


class NeverTriggers(EtcError):
    """No sign change of the triggering function inside the search horizon."""


class DegenerateState(EtcError, ValueError):
    pass


class SingularDirection(EtcError, ValueError):
    pass


class Unsupported(EtcError, ValueError):
    pass


class ZeroTradeoff(EtcError, ValueError):
    pass


class QuantizerTooCoarse(EtcError, ValueError):
    pass


class ConfigError(EtcError, ValueError):
    """Experiment configuration failed validation."""
