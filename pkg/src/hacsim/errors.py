"""Exception hierarchy shared by the simulation and analysis code."""
from __future__ import annotations


class HacError(Exception):
    """Base class for all package errors."""


class ConfigError(HacError, ValueError):
    """Invalid configuration, gains or simulation settings."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class NumericError(HacError, ArithmeticError):
    """Base class for failures of a numerical procedure."""


class NonPhysicalState(NumericError):
    """Raised when the dc-link voltage collapses to zero or below."""


class NonFiniteDerivative(NumericError):
    pass


class NoConvergence(NumericError):
    pass


class DegenerateImpedance(NumericError):
    pass


class DegenerateParams(NumericError):
    pass


class DegenerateGridVoltage(NumericError):
    pass


class ModulationOverflow(HacError, ValueError):
    pass


class EmptyLog(HacError, ValueError):
    pass
