"""
Core model for ion-stylus: physical constants, ion species, electrode
primitives, trap geometry and rf drive.

All geometry lengths are in micrometres, measured in a cylindrical frame whose
z axis is the trap symmetry axis and whose z = 0 is the outer ground plane.
Field evaluation works in SI metres; ``to_meters``/``to_micrometers`` convert.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from types import MappingProxyType
from typing import Mapping, Union

import numpy as np


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA-2018 constants used throughout the package."""

    hbar: float = 1.054571817e-34  # J s
    elementary_charge: float = 1.602176634e-19  # C
    atomic_mass_unit: float = 1.66053906660e-27  # kg
    bohr_magneton_over_h: float = 1.39962449e10  # Hz/T


CONSTANTS = PhysicalConstants()

MICRON = 1e-6


def to_meters(value_um):
    """Convert micrometres to metres (scalars or arrays)."""
    if np.ndim(value_um):
        return np.asarray(value_um, dtype=float) * MICRON
    return float(value_um) * MICRON


def to_micrometers(value_m):
    """Convert metres to micrometres (scalars or arrays)."""
    if np.ndim(value_m):
        return np.asarray(value_m, dtype=float) / MICRON
    return float(value_m) / MICRON


@dataclass(frozen=True)
class IonSpecies:
    """A trapped ion: mass in kg, charge in C."""

    mass: float
    charge: float
    label: str = ""

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"Ion mass must be positive, got {self.mass}")
        n = self.charge / CONSTANTS.elementary_charge
        if round(n) < 1 or abs(n - round(n)) > 1e-9:
            raise ValueError(f"Ion charge must be a positive multiple of e, got {self.charge} C")

    @property
    def charge_number(self) -> int:
        return int(round(self.charge / CONSTANTS.elementary_charge))


def make_ion(mass_number: int, charge_number: int = 1, label: str | None = None) -> IonSpecies:
    """Build an ion from its mass number and charge state.

    Args:
        mass_number: Nucleon count (mass = mass_number * amu)
        charge_number: Charge state (charge = charge_number * e)
        label: Optional display label, e.g. "24Mg+"

    Raises:
        ValueError: If either number is not a positive integer
    """
    if int(mass_number) != mass_number or mass_number <= 0:
        raise ValueError(f"mass_number must be a positive integer, got {mass_number}")
    if int(charge_number) != charge_number or charge_number < 1:
        raise ValueError(f"charge_number must be an integer >= 1, got {charge_number}")
    if label is None:
        label = f"A={mass_number} q={charge_number}e"
    return IonSpecies(
        mass=mass_number * CONSTANTS.atomic_mass_unit,
        charge=charge_number * CONSTANTS.elementary_charge,
        label=label,
    )


MG24 = make_ion(24, 1, "24Mg+")


class ElectrodeRole(str, Enum):
    """Function of an electrode in the trap; values are the config-file names."""

    RF = "rf"
    CENTER_GROUND = "center_ground"
    OUTER_GROUND_PLANE = "outer_ground_plane"
    COMPENSATION_A = "compensation_A"
    COMPENSATION_B = "compensation_B"
    COMPENSATION_C = "compensation_C"
    COMPENSATION_D = "compensation_D"
    AUXILIARY_PLANE = "auxiliary_plane"

    def __str__(self) -> str:
        return self.value


COMPENSATION_ROLES = (
    ElectrodeRole.COMPENSATION_A,
    ElectrodeRole.COMPENSATION_B,
    ElectrodeRole.COMPENSATION_C,
    ElectrodeRole.COMPENSATION_D,
)

# Roles that must appear exactly once in a TrapGeometry
REQUIRED_ROLES = (ElectrodeRole.RF, ElectrodeRole.CENTER_GROUND, ElectrodeRole.OUTER_GROUND_PLANE)


@dataclass(frozen=True)
class Tube:
    """Coaxial tube: a closed annular shell between two radii."""

    inner_radius: float
    outer_radius: float
    z_bottom: float
    z_top: float


@dataclass(frozen=True)
class Plane:
    """Horizontal disk or annulus at height z (finite, zero thickness)."""

    z: float
    outer_radius: float
    inner_radius: float = 0.0


@dataclass(frozen=True)
class Rod:
    """Vertical rod with its axis at (x, y)."""

    radius: float
    x: float
    y: float
    z_top: float
    z_bottom: float = 0.0

    @property
    def axis_distance(self) -> float:
        return math.hypot(self.x, self.y)


Shape = Union[Tube, Plane, Rod]


@dataclass(frozen=True)
class Electrode:
    """A conductor with its role in the trap."""

    role: ElectrodeRole
    shape: Shape

    @property
    def is_axisymmetric(self) -> bool:
        return not isinstance(self.shape, Rod)


@dataclass(frozen=True)
class TrapGeometry:
    """Conductor set of a stylus trap.

    ``delta_h`` is the protrusion of the centre-ground top above the rf top,
    ``h_rf`` the rf top above the ground plane (both in micrometres).
    """

    electrodes: tuple[Electrode, ...]
    delta_h: float
    h_rf: float

    def __post_init__(self):
        object.__setattr__(self, "electrodes", tuple(self.electrodes))

    @property
    def roles(self) -> tuple[ElectrodeRole, ...]:
        return tuple(e.role for e in self.electrodes)

    def electrode(self, role: ElectrodeRole | str) -> Electrode:
        """Return the (first) electrode with the given role.

        Raises:
            KeyError: If no electrode has that role
        """
        for e in self.electrodes:
            if e.role == role:
                return e
        raise KeyError(f"Geometry has no electrode with role '{role}'")

    def has_role(self, role: ElectrodeRole | str) -> bool:
        return any(e.role == role for e in self.electrodes)

    @property
    def axisymmetric_electrodes(self) -> tuple[Electrode, ...]:
        return tuple(e for e in self.electrodes if e.is_axisymmetric)

    @property
    def rods(self) -> tuple[Electrode, ...]:
        return tuple(e for e in self.electrodes if isinstance(e.shape, Rod))

    @property
    def cgnd_top_um(self) -> float:
        return self.electrode(ElectrodeRole.CENTER_GROUND).shape.z_top

    @property
    def rf_top_um(self) -> float:
        return self.electrode(ElectrodeRole.RF).shape.z_top

    def with_auxiliary_plane(self, z_um: float, radius_um: float = 5000.0) -> "TrapGeometry":
        """Return a copy with a grounded auxiliary disk at height ``z_um``.

        Any existing auxiliary plane is replaced.
        """
        kept = tuple(e for e in self.electrodes if e.role != ElectrodeRole.AUXILIARY_PLANE)
        aux = Electrode(ElectrodeRole.AUXILIARY_PLANE, Plane(z=z_um, outer_radius=radius_um))
        return replace(self, electrodes=kept + (aux,))


@dataclass(frozen=True)
class DriveConfig:
    """rf drive and dc voltage assignment.

    ``rf_amplitude`` is zero-to-peak in volts, ``rf_frequency`` the angular
    frequency Omega_rf in rad/s, ``dc_voltages`` maps role names to volts.
    """

    rf_amplitude: float
    rf_frequency: float
    dc_voltages: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.rf_frequency > 0:
            raise ValueError(f"rf_frequency must be > 0 rad/s, got {self.rf_frequency}")
        if self.rf_amplitude < 0:
            raise ValueError(f"rf_amplitude must be >= 0 V, got {self.rf_amplitude}")
        voltages = {str(k): float(v) for k, v in self.dc_voltages.items()}
        object.__setattr__(self, "dc_voltages", MappingProxyType(voltages))

    @classmethod
    def from_hz(cls, rf_amplitude: float, rf_frequency_hz: float, dc_voltages=None) -> "DriveConfig":
        return cls(rf_amplitude, 2 * math.pi * rf_frequency_hz, dc_voltages or {})

    @property
    def rf_frequency_hz(self) -> float:
        return self.rf_frequency / (2 * math.pi)


def _intervals_overlap(a0: float, a1: float, b0: float, b1: float) -> bool:
    return a0 < b1 and b0 < a1


def _radial_extent(shape: Shape) -> tuple[float, float]:
    if isinstance(shape, Tube):
        return shape.inner_radius, shape.outer_radius
    if isinstance(shape, Plane):
        return shape.inner_radius, shape.outer_radius
    d = shape.axis_distance
    return max(0.0, d - shape.radius), d + shape.radius


def _vertical_extent(shape: Shape) -> tuple[float, float]:
    if isinstance(shape, Plane):
        return shape.z, shape.z
    return shape.z_bottom, shape.z_top


def _shapes_overlap(a: Shape, b: Shape) -> bool:
    if isinstance(a, Rod) and isinstance(b, Rod):
        if not _intervals_overlap(a.z_bottom, a.z_top, b.z_bottom, b.z_top):
            return False
        return math.hypot(a.x - b.x, a.y - b.y) < a.radius + b.radius
    if isinstance(a, Plane) and isinstance(b, Plane):
        return abs(a.z - b.z) < 1e-9 and _intervals_overlap(a.inner_radius, a.outer_radius,
                                                           b.inner_radius, b.outer_radius)
    if isinstance(b, Plane):
        a, b = b, a
    if isinstance(a, Plane):
        z0, z1 = _vertical_extent(b)
        if not z0 < a.z < z1:
            return False
        if isinstance(b, Rod):
            # Rod footprint is a disk off axis; compare its radial band with the annulus
            r0, r1 = _radial_extent(b)
            return _intervals_overlap(a.inner_radius, a.outer_radius, r0, r1)
        return _intervals_overlap(a.inner_radius, a.outer_radius, b.inner_radius, b.outer_radius)
    az0, az1 = _vertical_extent(a)
    bz0, bz1 = _vertical_extent(b)
    if not _intervals_overlap(az0, az1, bz0, bz1):
        return False
    ar0, ar1 = _radial_extent(a)
    br0, br1 = _radial_extent(b)
    return _intervals_overlap(ar0, ar1, br0, br1)


def _shape_violations(e: Electrode) -> list[str]:
    s = e.shape
    out = []
    if isinstance(s, Tube):
        if not 0 <= s.inner_radius < s.outer_radius:
            out.append(f"{e.role}: inner radius {s.inner_radius} must be < outer radius {s.outer_radius}")
        if not s.z_bottom < s.z_top:
            out.append(f"{e.role}: z_bottom {s.z_bottom} must be < z_top {s.z_top}")
    elif isinstance(s, Plane):
        if not 0 <= s.inner_radius < s.outer_radius:
            out.append(f"{e.role}: plane inner radius {s.inner_radius} must be < outer radius {s.outer_radius}")
    elif isinstance(s, Rod):
        if not s.radius > 0:
            out.append(f"{e.role}: rod radius must be positive, got {s.radius}")
        if not s.z_bottom < s.z_top:
            out.append(f"{e.role}: z_bottom {s.z_bottom} must be < z_top {s.z_top}")
    else:
        out.append(f"{e.role}: unknown shape {type(s).__name__}")
    return out


_EXPECTED_SHAPE = {
    ElectrodeRole.RF: Tube,
    ElectrodeRole.CENTER_GROUND: Tube,
    ElectrodeRole.OUTER_GROUND_PLANE: Plane,
    ElectrodeRole.AUXILIARY_PLANE: Plane,
    **{role: Rod for role in COMPENSATION_ROLES},
}


def validate_geometry(g: TrapGeometry) -> list[str]:
    """Check every TrapGeometry invariant.

    Returns:
        List of human-readable violations; empty if the geometry is valid.
        Violations name the offending electrode role(s) or field.
    """
    violations: list[str] = []
    roles = [e.role for e in g.electrodes]

    for role in REQUIRED_ROLES:
        count = roles.count(role)
        if count == 0:
            violations.append(f"missing role: {role}")
        elif count > 1:
            violations.append(f"duplicate role: {role} appears {count} times")
    for role in COMPENSATION_ROLES + (ElectrodeRole.AUXILIARY_PLANE,):
        if roles.count(role) > 1:
            violations.append(f"duplicate role: {role} appears {roles.count(role)} times")

    for e in g.electrodes:
        violations.extend(_shape_violations(e))
        expected = _EXPECTED_SHAPE.get(e.role)
        if expected is not None and not isinstance(e.shape, expected):
            violations.append(f"{e.role}: expected {expected.__name__}, got {type(e.shape).__name__}")

    if math.isnan(g.delta_h):
        violations.append("delta_h: not a number")
    if not g.h_rf > 0:
        violations.append(f"h_rf: must be positive, got {g.h_rf}")

    if all(roles.count(r) == 1 for r in REQUIRED_ROLES):
        rf = g.electrode(ElectrodeRole.RF).shape
        cgnd = g.electrode(ElectrodeRole.CENTER_GROUND).shape
        plane = g.electrode(ElectrodeRole.OUTER_GROUND_PLANE).shape
        if isinstance(rf, Tube) and isinstance(cgnd, Tube) and isinstance(plane, Plane):
            if abs(cgnd.z_top - (rf.z_top + g.delta_h)) > 1e-9:
                violations.append(
                    f"delta_h: center_ground top {cgnd.z_top} != rf top {rf.z_top} + delta_h {g.delta_h}")
            if abs(rf.z_top - (plane.z + g.h_rf)) > 1e-9:
                violations.append(f"h_rf: rf top {rf.z_top} != ground plane {plane.z} + h_rf {g.h_rf}")

    for i, a in enumerate(g.electrodes):
        for b in g.electrodes[i + 1:]:
            if _shapes_overlap(a.shape, b.shape):
                violations.append(f"overlap: {a.role} / {b.role}")

    return violations
