"""
rf pseudopotential and total effective potential energy.

The pseudopotential of an ion of charge q and mass m in an rf field of
amplitude U and angular frequency Omega is q^2 U^2 |E_rf|^2 / (4 m Omega^2),
with E_rf the field of the rf basis function at 1 V. Energies are returned in
eV; everything else is SI.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
import polars as pl
from skimage import measure

from ion_stylus.model import CONSTANTS, MICRON, DriveConfig, ElectrodeRole, IonSpecies
from ion_stylus.solver import PotentialBasis

logger = logging.getLogger(__name__)

ENERGY_HESSIAN_STEP = 1e-6  # m
MAX_ISOLINE_LEVEL_EV = 0.5

PLANES = {"xz": (0, 2, 1), "yz": (1, 2, 0), "xy": (0, 1, 2)}


@dataclass(frozen=True)
class EffectivePotential:
    """An ion in the rf drive of a basis.

    ``rf_role`` names the basis role driven at ``drive.rf_amplitude``.
    """

    basis: PotentialBasis
    drive: DriveConfig
    ion: IonSpecies
    rf_role: str = str(ElectrodeRole.RF)

    @property
    def kappa(self) -> float:
        """q^2 U^2 / (4 m Omega^2) in J / (V/m)^2 of the unit rf field."""
        q, m = self.ion.charge, self.ion.mass
        return q * q * self.drive.rf_amplitude ** 2 / (4.0 * m * self.drive.rf_frequency ** 2)

    def with_rf(self, rf_amplitude: float | None = None, rf_frequency: float | None = None) -> "EffectivePotential":
        drive = replace(
            self.drive,
            rf_amplitude=self.drive.rf_amplitude if rf_amplitude is None else rf_amplitude,
            rf_frequency=self.drive.rf_frequency if rf_frequency is None else rf_frequency,
        )
        return replace(self, drive=drive)

    def with_basis(self, basis: PotentialBasis) -> "EffectivePotential":
        return replace(self, basis=basis)

    def dc(self, dc_voltages: Mapping[str, float] | None) -> Mapping[str, float]:
        return self.drive.dc_voltages if dc_voltages is None else dc_voltages


def _points(point) -> tuple[np.ndarray, bool]:
    arr = np.asarray(point, dtype=float)
    return np.atleast_2d(arr), arr.ndim == 1


def _energy_joules(ep: EffectivePotential, dc_voltages, points: np.ndarray, with_dc: bool) -> np.ndarray:
    rf = ep.basis.superpose({ep.rf_role: 1.0}, points, order=1)[1]
    energy = ep.kappa * np.sum(rf * rf, axis=1)
    if with_dc and dc_voltages:
        energy = energy + ep.ion.charge * ep.basis.superpose(dc_voltages, points, order=0)[0]
    return energy


def pseudo_energy(ep: EffectivePotential, point, check: bool = True):
    """Pseudopotential energy (eV) at a point (m), or an array for (n, 3) points.

    Raises:
        InsideConductorError: If a point lies inside a conductor
    """
    pts, single = _points(point)
    if check:
        pts = ep.basis.require_vacuum(pts)
    energy = _energy_joules(ep, None, pts, with_dc=False) / CONSTANTS.elementary_charge
    return float(energy[0]) if single else energy


def total_energy(ep: EffectivePotential, dc_voltages: Mapping[str, float] | None, point, check: bool = True):
    """Pseudopotential plus q * Phi_dc, in eV.

    ``dc_voltages`` None uses the drive's dc assignment.
    """
    dc = ep.dc(dc_voltages)
    ep.basis.check_voltages(dc)
    pts, single = _points(point)
    if check:
        pts = ep.basis.require_vacuum(pts)
    energy = _energy_joules(ep, dc, pts, with_dc=True) / CONSTANTS.elementary_charge
    return float(energy[0]) if single else energy


def _gradient_joules(ep: EffectivePotential, dc, points: np.ndarray) -> np.ndarray:
    _, e_rf, h_rf = ep.basis.superpose({ep.rf_role: 1.0}, points, order=2)
    # grad |E|^2 = -2 H E, with H the Hessian of phi
    grad = -2.0 * ep.kappa * np.einsum("nij,nj->ni", h_rf, e_rf)
    if dc:
        grad = grad - ep.ion.charge * ep.basis.superpose(dc, points, order=1)[1]
    return grad


def energy_gradient(ep: EffectivePotential, dc_voltages: Mapping[str, float] | None, point) -> np.ndarray:
    """Gradient of the total energy in eV/m."""
    dc = ep.dc(dc_voltages)
    pts, single = _points(point)
    grad = _gradient_joules(ep, dc, pts) / CONSTANTS.elementary_charge
    return grad[0] if single else grad


def energy_hessian(
    ep: EffectivePotential,
    dc_voltages: Mapping[str, float] | None,
    point,
    step: float = ENERGY_HESSIAN_STEP,
) -> np.ndarray:
    """Hessian of the total energy at one point, in J/m^2 (symmetric 3x3).

    The pseudopotential part is a central difference of the analytic gradient;
    the dc part is q times the dc potential Hessian.
    """
    p = np.asarray(point, dtype=float).reshape(3)
    offsets = np.concatenate([np.eye(3), -np.eye(3)]) * step
    g = _gradient_joules(ep, None, p[None, :] + offsets)
    hess = (g[:3] - g[3:]) / (2.0 * step)
    dc = ep.dc(dc_voltages)
    if dc:
        hess = hess + ep.ion.charge * ep.basis.superpose(dc, p[None, :], order=2)[2][0]
    return 0.5 * (hess + hess.T)


@dataclass(frozen=True)
class Isoline:
    """One marching-squares isoline; points are (n, 2) in micrometres."""

    curve_id: int
    level_eV: float
    points: np.ndarray
    closed: bool


@dataclass
class ContourMap:
    """Energy map on a plane and its isolines.

    ``energy_eV`` has shape (len(axis1_um), len(axis2_um)), NaN inside conductors.
    """

    plane: str
    offset_um: float
    axis1_um: np.ndarray
    axis2_um: np.ndarray
    energy_eV: np.ndarray
    isoline_step: float
    isolines: list[Isoline] = field(default_factory=list)

    def closed_around(self, point_um) -> list[Isoline]:
        """Closed isolines enclosing a point given in plane coordinates (um)."""
        probe = np.asarray(point_um, dtype=float)[None, :]
        return [c for c in self.isolines if c.closed and measure.points_in_poly(probe, c.points)[0]]

    def to_frame(self) -> pl.DataFrame:
        """One row per polyline vertex: curve_id, level_eV, closed, u_um, v_um."""
        a, b = self.plane[0], self.plane[1]
        rows = {"curve_id": [], "level_eV": [], "closed": [], f"{a}_um": [], f"{b}_um": []}
        for c in self.isolines:
            k = len(c.points)
            rows["curve_id"].extend([c.curve_id] * k)
            rows["level_eV"].extend([c.level_eV] * k)
            rows["closed"].extend([c.closed] * k)
            rows[f"{a}_um"].extend(c.points[:, 0].tolist())
            rows[f"{b}_um"].extend(c.points[:, 1].tolist())
        return pl.DataFrame(rows, schema={"curve_id": pl.Int64, "level_eV": pl.Float64, "closed": pl.Boolean,
                                          f"{a}_um": pl.Float64, f"{b}_um": pl.Float64})

    def to_dict(self) -> dict:
        return {
            "plane": self.plane,
            "offset_um": self.offset_um,
            "isoline_step_eV": self.isoline_step,
            "isolines": [
                {"curve_id": c.curve_id, "level_eV": c.level_eV, "closed": c.closed, "points_um": c.points.tolist()}
                for c in self.isolines
            ],
        }


def contour_map(
    ep: EffectivePotential,
    plane: str = "xz",
    extent_um: tuple[tuple[float, float], tuple[float, float]] = ((-400.0, 400.0), (1100.0, 2200.0)),
    shape: tuple[int, int] = (161, 221),
    isoline_step: float = 0.025,
    dc_voltages: Mapping[str, float] | None = None,
    offset_um: float = 0.0,
    max_level_eV: float | None = MAX_ISOLINE_LEVEL_EV,
) -> ContourMap:
    """Total-energy isolines at every multiple of ``isoline_step`` (eV).

    Levels stop ``max_level_eV`` above the lowest grid energy; None draws
    them up to the grid maximum.

    Args:
        ep: Effective potential
        plane: "xz", "yz" or "xy"; ``offset_um`` is the remaining coordinate
        extent_um: ((min, max), (min, max)) of the two in-plane axes
        shape: Grid points along the two axes
        isoline_step: Isoline separation in eV
        dc_voltages: dc assignment (None uses the drive's)
        max_level_eV: Highest isoline above the grid minimum (eV)

    Grid points inside conductors are masked; isolines running into them are
    returned open.
    """
    if not isoline_step > 0:
        raise ValueError(f"isoline_step must be > 0 eV, got {isoline_step}")
    if max_level_eV is not None and not max_level_eV > 0:
        raise ValueError(f"max_level_eV must be > 0 eV or None, got {max_level_eV}")
    if plane not in PLANES:
        raise ValueError(f"Unknown plane {plane!r}; expected one of {sorted(PLANES)}")
    i, j, k = PLANES[plane]
    u = np.linspace(extent_um[0][0], extent_um[0][1], shape[0])
    v = np.linspace(extent_um[1][0], extent_um[1][1], shape[1])
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = np.zeros((uu.size, 3))
    pts[:, i] = uu.ravel() * MICRON
    pts[:, j] = vv.ravel() * MICRON
    pts[:, k] = offset_um * MICRON

    dc = ep.dc(dc_voltages)
    ep.basis.check_voltages(dc)
    inside = ep.basis.contains(pts)
    energy = np.full(len(pts), np.nan)
    if np.any(~inside):
        energy[~inside] = _energy_joules(ep, dc, pts[~inside], with_dc=True) / CONSTANTS.elementary_charge
    energy = energy.reshape(uu.shape)

    cmap = ContourMap(plane, offset_um, u, v, energy, isoline_step)
    valid = np.isfinite(energy)
    if not np.any(valid):
        return cmap
    lo, hi = np.min(energy[valid]), np.max(energy[valid])
    top = hi if max_level_eV is None else min(hi, lo + max_level_eV)
    levels = np.arange(np.floor(lo / isoline_step) + 1, np.floor(top / isoline_step) + 1) * isoline_step
    levels = levels[(levels > lo) & (levels < hi) & (levels <= top)]
    logger.info("Contour levels: %d at %.3g eV spacing", len(levels), isoline_step)
    filled = np.where(valid, energy, hi)
    du, dv = u[1] - u[0], v[1] - v[0]
    curve_id = 0
    for level in levels:
        for c in measure.find_contours(filled, level, mask=valid):
            closed = len(c) > 3 and np.allclose(c[0], c[-1])
            poly = np.column_stack([u[0] + c[:, 0] * du, v[0] + c[:, 1] * dv])
            cmap.isolines.append(Isoline(curve_id, float(level), poly, bool(closed)))
            curve_id += 1
    return cmap
