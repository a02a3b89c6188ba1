"""
The three stylus trap configurations and their published operating data.

All three traps share the same electrode set and differ only in the
protrusion height of the centre-ground tube above the rf tube.
"""

from __future__ import annotations

import math
from typing import TypedDict

from ion_stylus.model import COMPENSATION_ROLES, Electrode, ElectrodeRole, Plane, Rod, TrapGeometry, Tube

# Electrode dimensions in micrometres (outer/inner diameters of the tubing)
OD_RF = 710.0
ID_RF = 535.0
OD_CGND = 205.0
ID_CGND = 100.0
OD_COMP = 150.0
H_RF = 1110.0

PROTRUSION_HEIGHTS = {1: 0.0, 2: 250.0, 3: 500.0}

# Not given in the published drawings; see DESIGN.md
COMP_CIRCLE_RADIUS = 800.0
COMP_TOP = 900.0
GROUND_PLANE_RADIUS = 5000.0
GROUND_PLANE_HOLE_RADIUS = 455.0
TUBE_BOTTOM = -1500.0

# Azimuths of rods A-D; A-D and B-C are opposite pairs
COMP_AZIMUTHS_DEG = {
    ElectrodeRole.COMPENSATION_A: 135.0,
    ElectrodeRole.COMPENSATION_B: 45.0,
    ElectrodeRole.COMPENSATION_C: 225.0,
    ElectrodeRole.COMPENSATION_D: 315.0,
}


class Table1Row(TypedDict):
    """Published operating parameters of one trap (single 24Mg+ ion)."""

    delta_h_um: float
    rf_voltage_V: float  # inferred from frequencies + simulation
    rf_frequency_MHz: float
    axial_MHz: float
    radial_AD_MHz: float
    radial_BC_MHz: float
    trap_depth_meV: float  # inferred from frequencies + simulation
    observed_h_um: float  # ion to centre-electrode top face
    solid_angle_fraction: float  # ignores comp rods and outer ground plane


# Reference values from the published trap characterisation table
TABLE1: dict[int, Table1Row] = {
    1: Table1Row(delta_h_um=0.0, rf_voltage_V=290.0, rf_frequency_MHz=80.15, axial_MHz=1.8,
                 radial_AD_MHz=0.951, radial_BC_MHz=0.907, trap_depth_meV=71.0,
                 observed_h_um=168.0, solid_angle_fraction=0.71),
    2: Table1Row(delta_h_um=250.0, rf_voltage_V=460.0, rf_frequency_MHz=31.94, axial_MHz=2.2,
                 radial_AD_MHz=1.268, radial_BC_MHz=1.233, trap_depth_meV=178.0,
                 observed_h_um=244.0, solid_angle_fraction=0.91),
    3: Table1Row(delta_h_um=500.0, rf_voltage_V=400.0, rf_frequency_MHz=11.85, axial_MHz=2.1,
                 radial_AD_MHz=1.064, radial_BC_MHz=1.007, trap_depth_meV=195.0,
                 observed_h_um=290.0, solid_angle_fraction=0.96),
}


def compensation_rods(
    circle_radius: float = COMP_CIRCLE_RADIUS,
    z_top: float = COMP_TOP,
    z_bottom: float = 0.0,
    diameter: float = OD_COMP,
) -> tuple[Electrode, ...]:
    """Four rods on a circle around the trap axis, in role order A-D."""
    rods = []
    for role in COMPENSATION_ROLES:
        phi = math.radians(COMP_AZIMUTHS_DEG[role])
        rods.append(Electrode(role, Rod(
            radius=diameter / 2,
            x=circle_radius * math.cos(phi),
            y=circle_radius * math.sin(phi),
            z_top=z_top,
            z_bottom=z_bottom,
        )))
    return tuple(rods)


def preset_geometry(
    config_id: int,
    comp_circle_radius: float = COMP_CIRCLE_RADIUS,
    comp_top: float = COMP_TOP,
    ground_plane_radius: float = GROUND_PLANE_RADIUS,
    ground_plane_hole_radius: float = GROUND_PLANE_HOLE_RADIUS,
    tube_bottom: float = TUBE_BOTTOM,
) -> TrapGeometry:
    """Return trap configuration #1, #2 or #3.

    Args:
        config_id: 1, 2 or 3 (protrusion 0, 250, 500 um)
        comp_circle_radius: Distance of the compensation rods from the axis (um)
        comp_top: Height of the rod tops above the ground plane (um)
        ground_plane_radius: Outer radius of the finite ground disk (um)
        ground_plane_hole_radius: Radius of the hole the rf tube passes through (um)
        tube_bottom: Height of the lower tube ends (um, below the ground plane)

    Raises:
        ValueError: If config_id is not 1, 2 or 3
    """
    if config_id not in PROTRUSION_HEIGHTS:
        raise ValueError(f"Unknown trap configuration {config_id!r}; expected one of 1, 2, 3")

    delta_h = PROTRUSION_HEIGHTS[config_id]
    rf_top = H_RF
    electrodes = (
        Electrode(ElectrodeRole.RF, Tube(ID_RF / 2, OD_RF / 2, tube_bottom, rf_top)),
        Electrode(ElectrodeRole.CENTER_GROUND, Tube(ID_CGND / 2, OD_CGND / 2, tube_bottom, rf_top + delta_h)),
        Electrode(ElectrodeRole.OUTER_GROUND_PLANE,
                  Plane(z=0.0, outer_radius=ground_plane_radius, inner_radius=ground_plane_hole_radius)),
    ) + compensation_rods(comp_circle_radius, comp_top)
    return TrapGeometry(electrodes=electrodes, delta_h=delta_h, h_rf=H_RF)
