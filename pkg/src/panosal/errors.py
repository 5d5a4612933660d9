"""Exception types shared across the package.

CLI exit-code mapping: ConfigError / DomainError / FormatError / MetricError
are input problems (exit 2); NumericError and subclasses are runtime numeric
failures (exit 3).
"""


class ConfigError(ValueError):
    """Invalid configuration: bad dimensions, shapes, or parameter ranges."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class FormatError(ValueError):
    """Malformed or inconsistent file/container content."""


class MetricError(ValueError):
    """Metric undefined for the given inputs (e.g. constant map for CC)."""


class NumericError(RuntimeError):
    """Non-finite values produced inside a numeric pipeline stage."""

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage


class TrainingError(NumericError):
    """Training aborted; carries the offending step index."""

    def __init__(self, message: str, step: int):
        super().__init__(message, stage="train")
        self.step = step
