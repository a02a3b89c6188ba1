"""ion-stylus: simulation and design toolkit for open-access stylus ion traps."""

from ion_stylus.analysis import (
    TrapReport,
    analyze_trap,
    find_null,
    infer_rf_voltage,
    mathieu_parameters,
    minimum_rf_for_depth,
    proximity_sweep,
    secular_frequencies,
    trap_depth,
)
from ion_stylus.compensation import (
    LineChargeBasis,
    actuator_basis,
    micromotion_scan,
    quadrupole_pattern,
    radial_axes,
    solve_compensation,
)
from ion_stylus.errors import (
    ConfigError,
    GeometryError,
    InsideConductorError,
    IonStylusError,
    NoMinimumError,
    NonConvergenceError,
    PhysicsError,
    RankDeficientError,
    SolverError,
    UnboundedPotentialError,
    ZeroHeatingRateError,
)
from ion_stylus.model import (
    CONSTANTS,
    MG24,
    DriveConfig,
    Electrode,
    ElectrodeRole,
    IonSpecies,
    Plane,
    Rod,
    TrapGeometry,
    Tube,
    make_ion,
    validate_geometry,
)
from ion_stylus.optics import (
    MirrorSpec,
    ObstructionScene,
    accessible_solid_angle,
    cavity_coupling_efficiency,
    dipole_collection_efficiency,
    mirror_geometry,
    mirror_solid_angle,
    pair_rate_boost,
    scene_from_geometry,
)
from ion_stylus.presets import TABLE1, preset_geometry
from ion_stylus.pseudopotential import EffectivePotential, contour_map, pseudo_energy, total_energy
from ion_stylus.sensing import (
    OscillatorSpec,
    RamseySpec,
    bfield_resolution,
    coherent_amplitude,
    efield_sensitivity,
    force_sensitivity,
    ground_state_size,
    sensitivity_budget,
)
from ion_stylus.solver import BasisSet, convergence_study, solve_basis

__all__ = [
    "CONSTANTS",
    "MG24",
    "TABLE1",
    "BasisSet",
    "ConfigError",
    "DriveConfig",
    "EffectivePotential",
    "Electrode",
    "ElectrodeRole",
    "GeometryError",
    "InsideConductorError",
    "IonSpecies",
    "IonStylusError",
    "LineChargeBasis",
    "MirrorSpec",
    "NoMinimumError",
    "NonConvergenceError",
    "ObstructionScene",
    "OscillatorSpec",
    "PhysicsError",
    "Plane",
    "RamseySpec",
    "RankDeficientError",
    "Rod",
    "SolverError",
    "TrapGeometry",
    "TrapReport",
    "Tube",
    "UnboundedPotentialError",
    "ZeroHeatingRateError",
    "accessible_solid_angle",
    "actuator_basis",
    "analyze_trap",
    "bfield_resolution",
    "cavity_coupling_efficiency",
    "coherent_amplitude",
    "contour_map",
    "convergence_study",
    "dipole_collection_efficiency",
    "efield_sensitivity",
    "find_null",
    "force_sensitivity",
    "ground_state_size",
    "infer_rf_voltage",
    "make_ion",
    "mathieu_parameters",
    "micromotion_scan",
    "minimum_rf_for_depth",
    "mirror_geometry",
    "mirror_solid_angle",
    "pair_rate_boost",
    "preset_geometry",
    "proximity_sweep",
    "pseudo_energy",
    "quadrupole_pattern",
    "radial_axes",
    "scene_from_geometry",
    "secular_frequencies",
    "sensitivity_budget",
    "solve_basis",
    "solve_compensation",
    "total_energy",
    "trap_depth",
    "validate_geometry",
]
