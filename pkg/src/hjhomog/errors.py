"""Exception types shared across the package.

Solver failures carry enough context to be reported on stderr by the CLI;
configuration problems are kept separate because they map to a different
exit code.
"""

from __future__ import annotations


class ConfigError(ValueError):
    """A configuration document violates the schema or a precondition."""


class LevelBelowMinimum(ValueError):
    """Requested level mu lies below the pointwise minimum of H(., y, omega)."""


class LevelNotAdmissible(ValueError):
    """mu does not dominate sup H(0, s, omega) on the requested range."""


class NonConvergence(RuntimeError):
    """An iterative solve stalled; carries diagnostics."""

    def __init__(self, message: str, **diagnostics: float):
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self) -> str:  # pragma: no cover - formatting only
        base = super().__str__()
        if self.diagnostics:
            details = ", ".join(f"{k}={v:g}" for k, v in self.diagnostics.items())
            return f"{base} ({details})"
        return base


class CFLViolation(ValueError):
    """Requested CFL number exceeds the monotonicity bound."""


class UnresolvedScale(ValueError):
    """Grid spacing too coarse for the oscillation scale of the data."""


class InvalidLimiter(ValueError):
    """Junction flux limiter below the admissible floor max of the minima."""
