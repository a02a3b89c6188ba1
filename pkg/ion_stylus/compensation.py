"""
Micromotion compensation with the four rods A-D and the centre electrode.

Rods are grounded screens in the axisymmetric solve; their own roles are
served here. Each rod is a uniform line charge on its axis, scaled so the
potential at one surface point (the side wall facing the trap axis, one
radius below the rod top) equals the applied voltage.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import polars as pl

from ion_stylus.analysis import find_null, secular_frequencies
from ion_stylus.errors import RankDeficientError
from ion_stylus.kernels import line_field, line_potential
from ion_stylus.model import MICRON, ElectrodeRole, Rod, TrapGeometry
from ion_stylus.pseudopotential import EffectivePotential
from ion_stylus.solver import PotentialBasis, solve_basis

logger = logging.getLogger(__name__)

COMPENSATED_UM = 1.0
RESIDUAL_TOL = 1e-3  # V/m

CENTER_ROLE = str(ElectrodeRole.CENTER_GROUND)

PAIRS = {
    "AD": (ElectrodeRole.COMPENSATION_A, ElectrodeRole.COMPENSATION_D),
    "BC": (ElectrodeRole.COMPENSATION_B, ElectrodeRole.COMPENSATION_C),
}


class LineChargeBasis(PotentialBasis):
    """Compensation rods as line charges, one role per rod."""

    def __init__(self, geometry: TrapGeometry):
        self.geometry = geometry
        self._rods: dict[str, tuple[Rod, float]] = {}
        for e in geometry.rods:
            rod = e.shape
            # Collocation point on the rod surface facing the axis
            z_c = (rod.z_top - rod.radius) * MICRON
            unit = line_potential(rod.z_bottom * MICRON, rod.z_top * MICRON, rod.radius * MICRON, z_c)
            self._rods[str(e.role)] = (rod, 1.0 / float(unit))

    @property
    def roles(self) -> tuple[str, ...]:
        return tuple(self._rods)

    def line_density(self, role: str) -> float:
        """Reduced line charge lambda / (4 pi eps0) per volt (V)."""
        return self._rods[str(role)][1]

    def _local(self, role: str, points: np.ndarray):
        rod, lam = self._rods[str(role)]
        points = np.atleast_2d(points)
        dx = points[:, 0] - rod.x * MICRON
        dy = points[:, 1] - rod.y * MICRON
        return rod, lam, dx, dy, np.hypot(dx, dy), points[:, 2]

    def unit_potential(self, role: str, points: np.ndarray) -> np.ndarray:
        rod, lam, _, _, rho, z = self._local(role, points)
        return lam * line_potential(rod.z_bottom * MICRON, rod.z_top * MICRON, rho, z)

    def unit_field(self, role: str, points: np.ndarray) -> np.ndarray:
        rod, lam, dx, dy, rho, z = self._local(role, points)
        e_rho, e_z = line_field(rod.z_bottom * MICRON, rod.z_top * MICRON, rho, z)
        safe = np.maximum(rho, 1e-12)
        return lam * np.column_stack([e_rho * dx / safe, e_rho * dy / safe, e_z])

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        inside = np.zeros(len(points), dtype=bool)
        for role, (rod, _) in self._rods.items():
            _, _, _, _, rho, z = self._local(role, points)
            inside |= ((rho <= (rod.radius + 1e-3) * MICRON)
                       & (z >= (rod.z_bottom - 1e-3) * MICRON) & (z <= (rod.z_top + 1e-3) * MICRON))
        return inside


@dataclass(frozen=True)
class ActuatorBasis:
    """Field (V/m) and Hessian (V/m^2) per applied volt at the null."""

    roles: tuple[str, ...]
    fields: np.ndarray  # (k, 3)
    hessians: np.ndarray  # (k, 3, 3)
    null: np.ndarray

    def field_of(self, voltages: Mapping[str, float]) -> np.ndarray:
        v = np.array([float(voltages.get(r, 0.0)) for r in self.roles])
        return v @ self.fields


def actuator_basis(g: TrapGeometry, null, basis: PotentialBasis | None = None, resolution: int | None = None):
    """Per-volt field and Hessian at ``null`` of rods A-D and the centre electrode.

    Args:
        g: Geometry carrying the compensation rods
        null: rf null (m)
        basis: Boundary-element basis of ``g`` for the centre-electrode
            actuator; solved when omitted

    Raises:
        ValueError: If the geometry has no compensation rods
    """
    if not g.rods:
        raise ValueError("Geometry has no compensation rods; use preset_geometry or add Rod electrodes")
    p = np.asarray(null, dtype=float).reshape(1, 3)
    rods = LineChargeBasis(g)
    if basis is None:
        basis = solve_basis(g) if resolution is None else solve_basis(g, resolution)
    roles, fields, hessians = [], [], []
    for role in rods.roles:
        roles.append(role)
        fields.append(rods.unit_field(role, p)[0])
        hessians.append(rods.unit_hessian(role, p)[0])
    if basis.owns(CENTER_ROLE):
        _, f, h = basis.superpose({CENTER_ROLE: 1.0}, p, order=2)
        roles.append(CENTER_ROLE)
        fields.append(f[0])
        hessians.append(h[0])
    return ActuatorBasis(tuple(roles), np.asarray(fields), np.asarray(hessians), p[0].copy())


@dataclass(frozen=True)
class CompensationSolution:
    """Least-squares actuator voltages against a stray field at the null."""

    voltages: dict[str, float]
    stray_field: np.ndarray
    residual_field: np.ndarray  # V/m, stray plus actuators

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residual_field))

    def predicted_displacements(
        self,
        stiffness: np.ndarray,
        u_ref: float,
        u_list: Sequence[float],
        charge: float,
        residual: bool = True,
    ) -> pl.DataFrame:
        """Null displacement per rf amplitude from the (residual) field.

        ``stiffness`` is the energy Hessian (J/m^2) at ``u_ref``; rf stiffness
        scales as U^2.
        """
        e = self.residual_field if residual else self.stray_field
        rows = []
        for u in u_list:
            k = np.asarray(stiffness) * (u / u_ref) ** 2
            d = np.linalg.solve(k, charge * e) / MICRON
            rows.append({"U_V": float(u), "dx_um": d[0], "dy_um": d[1], "dz_um": d[2]})
        return pl.DataFrame(rows)

    def to_dict(self) -> dict:
        return {
            "voltages_V": dict(self.voltages),
            "stray_field_V_per_m": self.stray_field.tolist(),
            "residual_field_V_per_m": self.residual_field.tolist(),
            "residual_norm_V_per_m": self.residual_norm,
        }


def solve_compensation(ab: ActuatorBasis, stray_field, tol: float = RESIDUAL_TOL) -> CompensationSolution:
    """Minimum-norm voltages minimising |E_stray + sum V_k E_k| at the null.

    Raises:
        RankDeficientError: If the actuators do not span all three field directions
    """
    e = np.asarray(stray_field, dtype=float).reshape(3)
    if not np.all(np.isfinite(e)):
        raise ValueError(f"Stray field must be finite, got {e.tolist()}")
    a = ab.fields.T
    u, s, _ = np.linalg.svd(a)
    rank = int(np.sum(s > s.max() * 1e-10)) if s.size and s.max() > 0 else 0
    if rank < 3:
        unreachable = u[:, rank:].T
        raise RankDeficientError(
            f"Actuators {list(ab.roles)} span only {rank} field directions; unreachable: "
            f"{np.round(unreachable, 4).tolist()}",
            unreachable=unreachable,
        )
    v, *_ = np.linalg.lstsq(a, -e, rcond=None)
    residual = e + a @ v
    if np.linalg.norm(residual) > tol:
        logger.warning("Compensation residual %.3g V/m exceeds %.3g V/m", np.linalg.norm(residual), tol)
    return CompensationSolution(dict(zip(ab.roles, map(float, v))), e, residual)


@dataclass(frozen=True)
class MicromotionScan:
    frame: pl.DataFrame
    max_pairwise_um: float
    compensated: bool


def micromotion_scan(
    ep: EffectivePotential,
    dc_voltages: Mapping[str, float] | None,
    u_list: Sequence[float],
    threshold_um: float = COMPENSATED_UM,
    hint=None,
) -> MicromotionScan:
    """Minimum position at each rf amplitude, relative to the rf-only null.

    Compensated iff the largest pairwise distance between positions is below
    ``threshold_um``.

    Raises:
        NoMinimumError: If the minimum is lost at some amplitude
    """
    if len(u_list) < 2:
        raise ValueError(f"micromotion_scan needs at least 2 rf amplitudes, got {len(u_list)}")
    dc = ep.dc(dc_voltages)
    rf_null = find_null(ep, {}, hint)
    positions = []
    hint = rf_null
    for u in u_list:
        p = find_null(ep.with_rf(rf_amplitude=float(u)), dc, hint=hint)
        positions.append(p)
        hint = p
    positions = np.asarray(positions)
    disp = (positions - rf_null) / MICRON
    spread = max((float(np.linalg.norm(a - b)) for a, b in itertools.combinations(positions, 2)), default=0.0)
    spread /= MICRON
    frame = pl.DataFrame({
        "U_V": [float(u) for u in u_list],
        "dx_um": disp[:, 0],
        "dy_um": disp[:, 1],
        "dz_um": disp[:, 2],
        "displacement_um": np.linalg.norm(disp, axis=1),
    })
    return MicromotionScan(frame, spread, spread < threshold_um)


def quadrupole_pattern(pair: str, volts: float) -> dict[str, float]:
    """dc voltages energising rods A and D ("AD") or B and C ("BC")."""
    if pair not in PAIRS:
        raise ValueError(f"Unknown rod pair {pair!r}; expected 'AD' or 'BC'")
    return {str(r): float(volts) for r in PAIRS[pair]}


@dataclass(frozen=True)
class RadialSplitting:
    splitting_hz: float
    radial_low_hz: float
    radial_high_hz: float
    axes: dict[str, np.ndarray]


def radial_axes(ep: EffectivePotential, dc_voltages: Mapping[str, float] | None = None, null=None) -> RadialSplitting:
    """Radial mode splitting and principal axes under a dc pattern."""
    dc = ep.dc(dc_voltages)
    p = find_null(ep, dc) if null is None else null
    modes = {m.label: m for m in secular_frequencies(ep, dc, p)}
    low, high = modes["radial_low"], modes["radial_high"]
    return RadialSplitting(
        splitting_hz=high.frequency_hz - low.frequency_hz,
        radial_low_hz=low.frequency_hz,
        radial_high_hz=high.frequency_hz,
        axes={"radial_low": low.axis, "radial_high": high.axis},
    )
