"""
Pytest configuration for ion_stylus tests.

Boundary-element solves are shared per session. ``coarse_basis`` (level 1)
is quick enough for every run; ``preset_basis`` solves at the default level
and is only requested by tests marked ``slow`` (deselect with -m "not slow").
"""

import math

import numpy as np
import pytest

from ion_stylus.model import MG24, DriveConfig
from ion_stylus.presets import TABLE1, preset_geometry
from ion_stylus.pseudopotential import EffectivePotential
from ion_stylus.solver import CombinedBasis, PolynomialBasis, solve_basis


def table1_drive(config_id: int, dc_voltages=None) -> DriveConfig:
    row = TABLE1[config_id]
    return DriveConfig.from_hz(row["rf_voltage_V"], row["rf_frequency_MHz"] * 1e6, dc_voltages)


@pytest.fixture(scope="session")
def coarse_basis():
    """Trap #3 solved at refinement level 1."""
    return solve_basis(preset_geometry(3), resolution=1)


@pytest.fixture(scope="session")
def coarse_ep(coarse_basis):
    return EffectivePotential(coarse_basis, table1_drive(3), MG24)


@pytest.fixture(scope="session")
def preset_basis():
    """Trap #1-#3 solved at the default level, memoised per trap."""
    solved = {}

    def get(config_id: int):
        if config_id not in solved:
            solved[config_id] = solve_basis(preset_geometry(config_id))
        return solved[config_id]

    return get


@pytest.fixture(scope="session")
def preset_ep(preset_basis):
    """Effective potential of trap #1-#3 at its published drive."""

    def get(config_id: int):
        return EffectivePotential(preset_basis(config_id), table1_drive(config_id), MG24)

    return get


@pytest.fixture
def quadrupole():
    """Factory for an analytic rf quadrupole bowl centred at ``origin`` (m).

    The rf role has Hessian diag(A, A, -2A) V/m^2 per volt; drive 100 V at
    2 pi x 10 MHz on 24Mg+.
    """

    def make(curvature: float = 1e7, origin=(0.0, 0.0, 0.0), extra=None):
        terms = {"rf": (0.0, np.zeros(3), np.diag([curvature, curvature, -2.0 * curvature]))}
        basis = PolynomialBasis(terms, origin=origin, axisymmetric=("rf",))
        if extra is not None:
            basis = CombinedBasis(basis, extra)
        return EffectivePotential(basis, DriveConfig(100.0, 2 * math.pi * 10e6), MG24)

    return make
