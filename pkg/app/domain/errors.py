"""
Exception types shared by the simulator.
"""


class SimulationError(Exception):
    """Base class for every error raised on purpose by the simulator."""


class NumericalError(SimulationError, ArithmeticError):
    """Non-finite values, failed factorizations or degenerate statistics."""


class ConfigError(SimulationError, ValueError):
    """An invalid run configuration or configuration file."""


class FeatureParseError(SimulationError, ValueError):
    """
    A malformed row in a feature CSV file.

    Args:
        path (str): The file being parsed.
        line_no (int): 1-based line number of the offending row.
        reason (str): What is wrong with the row.
    """

    def __init__(self, path: str, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


class MissingArtifactError(SimulationError, FileNotFoundError):
    """A run directory lacks one of the files a report needs."""
