"""
Panelisation of axisymmetric conductors for the boundary-element solver.

Every axisymmetric electrode is reduced to straight generator segments in the
(r, z) half-plane; each segment is cut into panels graded towards both ends,
where the surface charge has its edge singularity. Rings of identical rods
enter as screening cylinders with one shared charge density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ion_stylus.model import MICRON, Electrode, Plane, Rod, Tube

MIN_PANELS = 6
BASE_PANELS = 6
REFERENCE_LENGTH_UM = 100.0
PANEL_ARRAYS = ("r0", "z0", "r1", "z1", "owner", "segment")


@dataclass(frozen=True)
class PanelMesh:
    """Flat arrays describing N straight panels (metres).

    ``owner[i]`` indexes into ``roles``, or is -1 for rod screening panels;
    ``segment[i]`` identifies the generator segment the panel belongs to.
    """

    r0: np.ndarray
    z0: np.ndarray
    r1: np.ndarray
    z1: np.ndarray
    owner: np.ndarray
    segment: np.ndarray
    roles: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.r0)

    @property
    def length(self) -> np.ndarray:
        return np.hypot(self.r1 - self.r0, self.z1 - self.z0)

    def point_at(self, frac) -> tuple[np.ndarray, np.ndarray]:
        """(r, z) at fractional position ``frac`` along every panel."""
        return self.r0 + frac * (self.r1 - self.r0), self.z0 + frac * (self.z1 - self.z0)

    @property
    def midpoints(self) -> tuple[np.ndarray, np.ndarray]:
        return self.point_at(0.5)


def _segments(shape) -> list[tuple[float, float, float, float]]:
    """Generator segments (r0, z0, r1, z1) in micrometres."""
    if isinstance(shape, Tube):
        ri, ro, zb, zt = shape.inner_radius, shape.outer_radius, shape.z_bottom, shape.z_top
        return [
            (ro, zb, ro, zt),  # outer wall
            (ro, zt, ri, zt),  # top face
            (ri, zt, ri, zb),  # inner wall
            (ri, zb, ro, zb),  # bottom face
        ] if ri > 0 else [
            (ro, zb, ro, zt),
            (ro, zt, 0.0, zt),
            (0.0, zb, ro, zb),
        ]
    if isinstance(shape, Plane):
        return [(shape.inner_radius, shape.z, shape.outer_radius, shape.z)]
    raise TypeError(f"{type(shape).__name__} is not axisymmetric")


def panel_count(length_um: float, level: int) -> int:
    """Panels for a segment: grows with sqrt(length) and doubles per level."""
    n = BASE_PANELS * 2 ** (level - 1) * math.sqrt(length_um / REFERENCE_LENGTH_UM)
    return max(MIN_PANELS, int(math.ceil(n)))


def _graded_breaks(n: int) -> np.ndarray:
    # Chebyshev spacing clusters panels at both segment ends
    return 0.5 * (1.0 - np.cos(np.pi * np.arange(n + 1) / n))


def build_mesh(electrodes: Sequence[Electrode], level: int) -> PanelMesh:
    """Panelise the axisymmetric electrodes at refinement ``level`` (>= 1).

    Rods are skipped here; see ``rod_shells``.
    """
    if level < 1:
        raise ValueError(f"Refinement level must be >= 1, got {level}")

    roles: list[str] = []
    r0, z0, r1, z1, owner, segment = [], [], [], [], [], []
    seg_id = 0
    for e in electrodes:
        if not e.is_axisymmetric:
            continue
        role = str(e.role)
        if role not in roles:
            roles.append(role)
        idx = roles.index(role)
        for a_r, a_z, b_r, b_z in _segments(e.shape):
            length = math.hypot(b_r - a_r, b_z - a_z)
            if length <= 0:
                continue
            t = _graded_breaks(panel_count(length, level))
            pr = a_r + t * (b_r - a_r)
            pz = a_z + t * (b_z - a_z)
            r0.append(pr[:-1])
            z0.append(pz[:-1])
            r1.append(pr[1:])
            z1.append(pz[1:])
            owner.append(np.full(len(t) - 1, idx))
            segment.append(np.full(len(t) - 1, seg_id))
            seg_id += 1

    if not r0:
        raise ValueError("No axisymmetric electrodes to mesh")

    return PanelMesh(
        r0=np.concatenate(r0) * MICRON,
        z0=np.concatenate(z0) * MICRON,
        r1=np.concatenate(r1) * MICRON,
        z1=np.concatenate(z1) * MICRON,
        owner=np.concatenate(owner).astype(int),
        segment=np.concatenate(segment).astype(int),
        roles=tuple(roles),
    )


@dataclass(frozen=True)
class RodShell:
    """Rods sharing axis distance, radius and height, smeared over azimuth.

    The azimuthal average of their charge is a uniformly charged cylinder of
    radius ``axis_distance``, which the axisymmetric solve can carry.
    """

    axis_distance: float  # um
    z_bottom: float
    z_top: float
    rods: tuple[Rod, ...]

    @property
    def rod_radius(self) -> float:
        return self.rods[0].radius

    def collocation_point(self) -> tuple[float, float, float]:
        """Surface point of the first rod facing the axis, one radius below its top (um)."""
        rod = self.rods[0]
        scale = 1.0 - rod.radius / self.axis_distance
        return rod.x * scale, rod.y * scale, rod.z_top - rod.radius


def rod_shells(electrodes: Sequence[Electrode]) -> list[RodShell]:
    """Group rods into screening shells, in order of first appearance."""
    groups: dict[tuple, list[Rod]] = {}
    for e in electrodes:
        if isinstance(e.shape, Rod):
            rod = e.shape
            key = (round(rod.axis_distance, 6), rod.radius, rod.z_bottom, rod.z_top)
            groups.setdefault(key, []).append(rod)
    return [RodShell(key[0], key[2], key[3], tuple(rods)) for key, rods in groups.items()]


def shell_mesh(shells: Sequence[RodShell], level: int, roles: tuple[str, ...], first_segment: int) -> PanelMesh:
    """Panels of the screening cylinders; ``segment`` counts on from ``first_segment``."""
    r0, z0, r1, z1, segment = [], [], [], [], []
    for i, shell in enumerate(shells):
        t = _graded_breaks(panel_count(shell.z_top - shell.z_bottom, level))
        pz = shell.z_bottom + t * (shell.z_top - shell.z_bottom)
        r0.append(np.full(len(t) - 1, shell.axis_distance))
        r1.append(np.full(len(t) - 1, shell.axis_distance))
        z0.append(pz[:-1])
        z1.append(pz[1:])
        segment.append(np.full(len(t) - 1, first_segment + i))
    n = sum(len(a) for a in r0)
    return PanelMesh(
        r0=np.concatenate(r0) * MICRON,
        z0=np.concatenate(z0) * MICRON,
        r1=np.concatenate(r1) * MICRON,
        z1=np.concatenate(z1) * MICRON,
        owner=np.full(n, -1, dtype=int),
        segment=np.concatenate(segment).astype(int),
        roles=roles,
    )


def join_meshes(a: PanelMesh, b: PanelMesh) -> PanelMesh:
    """Panels of ``a`` followed by those of ``b``; roles are taken from ``a``."""
    arrays = {name: np.concatenate([getattr(a, name), getattr(b, name)]) for name in PANEL_ARRAYS}
    return PanelMesh(**arrays, roles=a.roles)
