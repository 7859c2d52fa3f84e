"""
Exception hierarchy for the simulator.
Usage problems map to exit code 1, numerical failures to exit code 2.
"""

from typing import Optional


class SimulationError(Exception):
    """Base class for every error raised by the simulator."""


class ConfigurationError(SimulationError, ValueError):
    """Invalid parameters, presets or command-line usage."""


class NumericalError(SimulationError, RuntimeError):
    """A solver, integrator or fit could not produce a trustworthy result."""


class DimensionError(NumericalError):
    """Operators or states of mismatched dimension were combined."""


class SteadyStateError(NumericalError):
    """The Liouvillian has no unique steady state."""


class IntegrationError(NumericalError):
    """The master-equation integrator gave up."""

    def __init__(self, message: str, time: Optional[float] = None):
        super().__init__(message if time is None else f"{message} (at t={time:.6e} s)")
        self.time = time


class TrajectoryError(NumericalError):
    """A quantum trajectory lost its norm without resolving a jump."""


class CalibrationError(NumericalError):
    """The requested drive strength is out of reach."""


class CorrelationError(NumericalError):
    """A correlation ratio is undefined (vanishing intensity)."""


class FitError(NumericalError):
    """The coincidence envelope fit did not converge."""


class HistogramError(SimulationError, ValueError):
    """A coincidence histogram cannot be built or read."""
