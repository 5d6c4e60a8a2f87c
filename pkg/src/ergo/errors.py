"""Exception types shared across the package."""


class ErgoError(Exception):
    """Base class for all package errors."""


class StepCapError(ErgoError, ValueError):
    """A grid step exceeds the model's declared step cap."""


class NumericalBlowup(ErgoError, FloatingPointError):
    """A non-finite state appeared during a scheme run."""

    def __init__(self, step, particle, message=None):
        self.step = int(step)
        self.particle = int(particle)
        super().__init__(message or f"non-finite state at step {self.step}, particle {self.particle}")


class NoiseConventionError(ErgoError, ValueError):
    """Two models cannot share a noise stream in the requested way."""


class DegenerateFit(ErgoError, ValueError):
    """A regression had no identifiable solution."""


class InsufficientCheckpoints(ErgoError, ValueError):
    """Too few checkpoints survive bias filtering for a rate fit."""


class StationarityError(ErgoError, RuntimeError):
    """An empirical reference measure failed its stationarity probe."""

    def __init__(self, message, drift=None):
        self.drift = drift or {}
        super().__init__(message)


class ConfigError(ErgoError, ValueError):
    """Invalid experiment configuration."""
