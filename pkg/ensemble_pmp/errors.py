"""
Exception hierarchy for the ensemble optimal control package.
"""

from typing import Optional


class EnsemblePMPError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(EnsemblePMPError, ValueError):
    """Run configuration could not be read or validated."""

    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        self.field = field
        self.line = line
        self.column = column
        location = ""
        if field:
            location = f" [field: {field}]"
        elif line is not None:
            location = f" [line {line}, column {column}]"
        super().__init__(f"{message}{location}")


class DistributionError(EnsemblePMPError, ValueError):
    """A parameter law is malformed."""

    def __init__(self, parameter: str, message: str):
        self.parameter = parameter
        super().__init__(f"parameter '{parameter}': {message}")


class DimensionError(EnsemblePMPError, ValueError):
    """Array shapes do not match the declared state dimension."""


class ModelDomainError(EnsemblePMPError, ArithmeticError):
    """A vector field was evaluated outside the region where it is defined."""


class IntegrationAbort(EnsemblePMPError, RuntimeError):
    """Non-finite state or costate produced while integrating."""

    def __init__(self, message: str, step: Optional[int] = None,
                 time: Optional[float] = None, sample: Optional[int] = None):
        self.step = step
        self.time = time
        self.sample = sample
        context = []
        if step is not None:
            context.append(f"step {step}")
        if time is not None:
            context.append(f"t={time:.6g}")
        if sample is not None:
            context.append(f"sample {sample}")
        suffix = f" ({', '.join(context)})" if context else ""
        super().__init__(f"{message}{suffix}")


class SolverError(EnsemblePMPError, RuntimeError):
    """Inner solve failed; the partial report is attached when available."""

    def __init__(self, message: str, partial_report=None):
        self.partial_report = partial_report
        super().__init__(message)
