"""
Error hierarchy shared by the services, the CLI and the HTTP layer
"""

from typing import Any, Dict, Optional

from app.config import EXIT_ASSERTION_FAILURE, EXIT_CONFIG_ERROR


class LabError(Exception):
    """Base class; `exit_code` is what the CLI returns when the error escapes a command"""

    exit_code = EXIT_CONFIG_ERROR

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": self.details
        }


class NumericalFailure(LabError):
    """A computation ran but could not meet its accuracy contract"""

    exit_code = EXIT_ASSERTION_FAILURE


# Parameters and dimensions

class NonPositiveRate(LabError):
    def __init__(self, i: int, j: int, value: float):
        super().__init__(
            f"pi[{i}] + pihat[{j}] = {value:.6g} is not strictly positive",
            {"i": i, "j": j, "value": value}
        )
        self.i = i
        self.j = j
        self.value = value


class LengthMismatch(LabError):
    pass


class DimensionError(LabError):
    pass


class LevelOutOfRange(LabError):
    def __init__(self, level: int, p: int, time: float):
        super().__init__(
            f"level {level} outside [1, {p}] for time {time}",
            {"level": level, "p": p, "time": time}
        )


class DegenerateParameters(LabError):
    pass


class ConfigError(LabError):
    pass


# Special functions and contours

class OutOfRange(LabError):
    pass


class BadGeometry(LabError):
    pass


class UnsupportedWindow(LabError):
    pass


class BadContours(LabError):
    pass


class ContourInfeasible(LabError):
    """Pole placement cannot be satisfied; `details` names the violated inequality"""

    def __init__(self, message: str, inequality: str, hint: str = ""):
        super().__init__(message, {"inequality": inequality, "hint": hint})
        self.inequality = inequality
        self.hint = hint


# Numerical failures

class ConvergenceFailure(NumericalFailure):
    pass


class OverflowGuard(NumericalFailure):
    pass


class TruncationInsufficient(NumericalFailure):
    pass


class NonConvergent(NumericalFailure):
    pass


class ProblemTooLarge(LabError):
    pass


# Statistics

class EmptySample(LabError):
    pass


class NonMonotoneCdf(LabError):
    pass
