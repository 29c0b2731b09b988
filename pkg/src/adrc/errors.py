"""Exception types shared across the package."""


class AdrcError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AdrcError, ValueError):
    """A parameter or scenario violates its admissible range."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class DivergenceError(AdrcError, ArithmeticError):
    """A simulated signal became non-finite.

    Attributes:
        t: time [s] at which the non-finite value was detected.
        signal: name of the offending signal.
        trace: partially recorded trace, when raised from the simulator.
    """

    def __init__(self, t, signal, trace=None):
        self.t = t
        self.signal = signal
        self.trace = trace
        super().__init__(f"non-finite value in {signal} at t={t!r}")


class UnsupportedPlantError(AdrcError, TypeError):
    """The requested operation is not defined for this plant."""
