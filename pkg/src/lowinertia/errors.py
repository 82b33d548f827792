"""Exception hierarchy shared by the whole pipeline."""

from __future__ import annotations


class LowInertiaError(Exception):
    """Base class for all package errors."""


class CaseError(LowInertiaError, ValueError):
    """Problem with the network case input."""


class CaseParseError(CaseError):
    """Malformed case file.

    ``line`` is 1-based and ``field`` names the offending column/key when known.
    """

    def __init__(self, message: str, *, path=None, line: int | None = None, field: str | None = None):
        self.path = path
        self.line = line
        self.field = field
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class CaseValidationError(CaseError):
    """A structural invariant of the case is violated."""


class SingularNetworkError(LowInertiaError):
    """B_LL is singular, i.e. some load buses are islanded from every generator."""


class AssemblyError(LowInertiaError, ValueError):
    """Device list, network and disturbance are inconsistent."""


class PowerFlowError(LowInertiaError):
    """Newton power flow failed (non-convergence or singular Jacobian)."""

    def __init__(self, message: str, *, stage: str | None = None, iterations: int = 0, mismatch: float = float("nan")):
        self.stage = stage
        self.iterations = iterations
        self.mismatch = mismatch
        super().__init__(f"[{stage}] {message}" if stage else message)


class NumericalError(LowInertiaError):
    """Non-finite values or an otherwise unusable numerical result."""


class ConfigError(LowInertiaError, ValueError):
    """Invalid scenario configuration."""
