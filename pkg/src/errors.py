"""
Error types raised by the simulator, its controllers and the metrics layer.
"""

from typing import Optional


class MicrogridSimError(Exception):
    """Base class for all simulator errors"""


class ConfigInvalid(MicrogridSimError):
    """Simulation configuration failed validation"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        location = []
        if line is not None:
            location.append(f"line {line}")
        if key:
            location.append(f"key '{key}'")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")


class NumericalBlowup(MicrogridSimError):
    """A plant state left the physically meaningful range"""

    def __init__(self, message: str, time: Optional[float] = None):
        self.time = time
        if time is not None:
            message = f"{message} (t={time:.6f} s)"
        super().__init__(message)


class InsufficientCrossings(MicrogridSimError):
    """Fewer than two rising zero crossings in the measurement window"""


class NeverSettles(MicrogridSimError):
    """Signal never permanently enters its settling band"""


class ControlSetTooLarge(MicrogridSimError):
    """Joint enumeration of the VSI control set is too large"""
