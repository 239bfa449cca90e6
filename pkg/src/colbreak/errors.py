"""Package-wide exception types."""
from __future__ import annotations


class ColbreakError(Exception):
    """Base class for all errors raised by this package."""


class UnsupportedOperation(ColbreakError):
    """Requested operation is not defined for the given catalog member."""


class StiffnessError(ColbreakError):
    """Adaptive time stepper underflowed its minimum step size.

    Carries a diagnostic snapshot of the integration state so the failure
    can be inspected (or reported) instead of silently producing NaNs.
    """

    def __init__(self, message: str, t: float, dt: float, diagnostics: dict | None = None):
        super().__init__(message)
        self.t = t
        self.dt = dt
        self.diagnostics = diagnostics or {}


class ConfigError(ColbreakError):
    """Run-configuration validation failed.

    ``errors`` holds every violation found (not just the first), each as a
    path-qualified message like ``"kernel.ell: must be > 0"``.
    """

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid run configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))
