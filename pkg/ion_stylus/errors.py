"""
Exception hierarchy for ion-stylus.

Every error derives from IonStylusError and from the closest builtin, so
callers can catch either ``IonStylusError`` or ``ValueError``/``RuntimeError``.
"""

from __future__ import annotations

from typing import Sequence


class IonStylusError(Exception):
    """Base class for all ion-stylus errors."""


class ConfigError(IonStylusError, ValueError):
    """Run configuration failed schema validation."""


class GeometryError(IonStylusError, ValueError):
    """Trap geometry violates its invariants."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        lines = "\n  ".join(self.violations)
        super().__init__(f"Invalid trap geometry ({len(self.violations)} violations):\n  {lines}")


class InsideConductorError(IonStylusError, ValueError):
    """A field evaluation point lies inside a conductor."""


class ZeroHeatingRateError(IonStylusError, ValueError):
    """A heating-limited sensitivity was requested with zero heating rate."""


class PhysicsError(IonStylusError, RuntimeError):
    """Base class for failures of the physical model (CLI exit status 3)."""


class SolverError(PhysicsError):
    """The boundary-element system is singular or ill-conditioned."""

    def __init__(self, message: str, condition: float | None = None):
        self.condition = condition
        super().__init__(message)


class NoMinimumError(PhysicsError):
    """No potential minimum was found, or the stationary point is a saddle."""

    def __init__(self, message: str, position=None, eigenvalues=None):
        self.position = position
        self.eigenvalues = eigenvalues
        super().__init__(message)


class UnboundedPotentialError(PhysicsError):
    """The potential has no confining barrier around the minimum."""


class NonConvergenceError(PhysicsError):
    """An iterative root find did not converge."""


class RankDeficientError(PhysicsError):
    """Compensation actuators cannot reach every field direction."""

    def __init__(self, message: str, unreachable=None):
        self.unreachable = unreachable
        super().__init__(message)
