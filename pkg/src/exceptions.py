"""Exception types raised by the synchronization library."""

from typing import List, Optional


class ChaosSyncError(Exception):
    """Base class for all chaossync errors."""


class DimensionError(ChaosSyncError, ValueError):
    """A vector does not have the dimension its context requires."""


class UnknownSystemError(ChaosSyncError, KeyError):
    """Lookup of a system name that was never registered."""

    def __str__(self):
        return str(self.args[0]) if self.args else 'unknown system'


class DuplicateSystemError(ChaosSyncError, ValueError):
    """A system name is registered twice."""


class ValidationError(ChaosSyncError, ValueError):
    """A scheme definition violates one or more rules."""

    def __init__(self, violations: List[str]):
        self.violations = [str(v) for v in violations]
        super().__init__('; '.join(self.violations) or 'validation failed')


class AssignmentError(ValidationError):
    """A switching assignment violates one or more rules."""


class ScalingError(ValidationError):
    """Scaling vectors are inconsistent or inadmissible."""


class UnrealizableControlError(ChaosSyncError, ArithmeticError):
    """An aggregate control cannot be split onto the available channels."""


class NonFiniteStateError(ChaosSyncError, ArithmeticError):
    """NaN or Inf showed up in a state or derivative."""


class DivergenceError(ChaosSyncError, ArithmeticError):
    """A trajectory left the divergence bound."""

    def __init__(self, message: str, time: Optional[float] = None):
        self.time = time
        super().__init__(message)


class ConfigError(ChaosSyncError, ValueError):
    """A run configuration file is malformed."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        location = ''
        if key:
            location += f" [key: {key}]"
        if line:
            location += f" [line {line}]"
        super().__init__(f"{message}{location}")
