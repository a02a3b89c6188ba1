"""
Tests for ion_stylus.pseudopotential on analytic quadrupole bases.
"""

import dataclasses

import numpy as np
import pytest

from ion_stylus.analysis import find_null
from ion_stylus.errors import InsideConductorError
from ion_stylus.model import CONSTANTS, MICRON, make_ion
from ion_stylus.pseudopotential import (
    contour_map,
    energy_gradient,
    energy_hessian,
    pseudo_energy,
    total_energy,
)
from ion_stylus.solver import PolynomialBasis, solve_basis

EV = CONSTANTS.elementary_charge


def uniform_push(field_v_per_m: float = 1.0):
    """Role "push" giving a uniform +z field of ``field_v_per_m`` per volt."""
    return PolynomialBasis({"push": (0.0, np.array([0.0, 0.0, -field_v_per_m]), np.zeros((3, 3)))})


class TestPseudoEnergy:
    """Tests for pseudo_energy() and total_energy()."""

    def test_zero_at_null(self, quadrupole):
        assert pseudo_energy(quadrupole(), [0.0, 0.0, 0.0]) == 0.0

    def test_quadrupole_value(self, quadrupole):
        a = 1e7
        ep = quadrupole(a)
        expected = ep.kappa * a * a * (1e-6 ** 2 + 4 * 2e-6 ** 2) / EV
        assert pseudo_energy(ep, [1e-6, 0.0, 2e-6]) == pytest.approx(expected, rel=1e-12)

    def test_kappa(self, quadrupole):
        ep = quadrupole()
        q, m = ep.ion.charge, ep.ion.mass
        u, omega = ep.drive.rf_amplitude, ep.drive.rf_frequency
        assert ep.kappa == pytest.approx(q * q * u * u / (4 * m * omega * omega), rel=1e-12)

    def test_scales_with_amplitude_squared(self, quadrupole):
        ep = quadrupole()
        p = [3e-6, -1e-6, 2e-6]
        assert pseudo_energy(ep.with_rf(rf_amplitude=200.0), p) == pytest.approx(4 * pseudo_energy(ep, p), rel=1e-12)

    def test_scales_with_inverse_frequency_squared(self, quadrupole):
        ep = quadrupole()
        p = [3e-6, -1e-6, 2e-6]
        faster = ep.with_rf(rf_frequency=2 * ep.drive.rf_frequency)
        assert pseudo_energy(faster, p) == pytest.approx(pseudo_energy(ep, p) / 4, rel=1e-12)

    def test_scales_with_inverse_mass(self, quadrupole):
        ep = quadrupole()
        heavy = dataclasses.replace(ep, ion=make_ion(48, 1))
        p = [3e-6, -1e-6, 2e-6]
        assert pseudo_energy(heavy, p) == pytest.approx(pseudo_energy(ep, p) / 2, rel=1e-9)

    def test_non_negative(self, quadrupole):
        pts = np.random.default_rng(7).uniform(-50e-6, 50e-6, size=(200, 3))
        assert np.all(pseudo_energy(quadrupole(), pts) >= 0.0)

    def test_vectorised(self, quadrupole):
        pts = np.array([[1e-6, 0.0, 0.0], [0.0, 0.0, 1e-6]])
        e = pseudo_energy(quadrupole(), pts)
        assert e.shape == (2,)
        assert e[1] == pytest.approx(4 * e[0], rel=1e-12)

    def test_dc_adds_charge_times_potential(self, quadrupole):
        ep = quadrupole(extra=uniform_push())
        p = [0.0, 0.0, 2e-6]
        # q * phi in eV is numerically phi in volts for a singly charged ion
        delta = total_energy(ep, {"push": 3.0}, p) - total_energy(ep, {}, p)
        assert delta == pytest.approx(-3.0 * 2e-6, rel=1e-9)

    def test_inside_conductor(self, coarse_ep):
        with pytest.raises(InsideConductorError):
            pseudo_energy(coarse_ep, [75e-6, 0.0, 1000e-6])

    def test_unknown_dc_role(self, quadrupole):
        with pytest.raises(ValueError):
            total_energy(quadrupole(), {"compensation_A": 1.0}, [0.0, 0.0, 0.0])


class TestDerivatives:
    """Tests for energy_gradient() and energy_hessian()."""

    def test_hessian_of_quadrupole(self, quadrupole):
        a = 1e7
        ep = quadrupole(a)
        k = 2 * ep.kappa * a * a
        hess = energy_hessian(ep, {}, [2e-6, -1e-6, 1e-6])
        assert np.allclose(hess, np.diag([k, k, 4 * k]), rtol=1e-6, atol=1e-6 * k)

    def test_gradient_against_energy_differences(self, quadrupole):
        ep = quadrupole(extra=uniform_push())
        dc = {"push": 0.5}
        p = np.array([2e-6, -1e-6, 3e-6])
        h = 1e-9
        fd = [(total_energy(ep, dc, p + h * d) - total_energy(ep, dc, p - h * d)) / (2 * h) for d in np.eye(3)]
        assert np.allclose(energy_gradient(ep, dc, p), fd, rtol=1e-5)

    def test_dc_field_shifts_equilibrium(self, quadrupole):
        a, e0 = 5e5, 10.0
        ep = quadrupole(a, extra=uniform_push())
        k_z = 8 * ep.kappa * a * a
        null = find_null(ep, {"push": e0}, hint=[0.0, 0.0, 0.0])
        assert null[2] == pytest.approx(ep.ion.charge * e0 / k_z, rel=2e-3)
        assert abs(null[0]) < 1e-10 and abs(null[1]) < 1e-10


class TestContourMap:
    """Tests for contour_map()."""

    def test_concentric_circles(self, quadrupole):
        ep = quadrupole(5e5)
        c = ep.kappa * (5e5) ** 2 * MICRON ** 2 / EV  # eV per um^2 in the xy plane
        cmap = contour_map(ep, "xy", ((-10.0, 10.0), (-10.0, 10.0)), (81, 81), isoline_step=1e-5)
        closed = cmap.closed_around((0.0, 0.0))
        assert len(closed) >= 5
        for iso in closed:
            radius = np.hypot(iso.points[:, 0], iso.points[:, 1])
            assert np.allclose(radius, np.sqrt(iso.level_eV / c), rtol=0.02)

    def test_levels_are_multiples_of_step(self, quadrupole):
        cmap = contour_map(quadrupole(5e5), "xz", ((-10.0, 10.0), (-10.0, 10.0)), (41, 41), isoline_step=2e-5)
        levels = {iso.level_eV for iso in cmap.isolines}
        assert levels
        assert all(abs(lv / 2e-5 - round(lv / 2e-5)) < 1e-6 for lv in levels)

    def test_levels_stop_at_the_cap(self, quadrupole):
        ep = quadrupole(5e5)
        extent = ((-10.0, 10.0), (-10.0, 10.0))
        full = contour_map(ep, "xy", extent, (41, 41), isoline_step=1e-5, max_level_eV=None)
        capped = contour_map(ep, "xy", extent, (41, 41), isoline_step=1e-5, max_level_eV=4e-5)
        lo = float(np.nanmin(capped.energy_eV))
        levels = {iso.level_eV for iso in capped.isolines}
        assert levels
        assert max(levels) <= lo + 4e-5 + 1e-12
        assert len({iso.level_eV for iso in full.isolines}) > len(levels)

    @pytest.mark.parametrize("cap", [0.0, -0.1])
    def test_invalid_cap(self, quadrupole, cap):
        with pytest.raises(ValueError, match="max_level_eV"):
            contour_map(quadrupole(), max_level_eV=cap)

    def test_flat_energy_has_no_isolines(self, quadrupole):
        ep = quadrupole().with_rf(rf_amplitude=0.0)
        cmap = contour_map(ep, "xz", ((-10.0, 10.0), (-10.0, 10.0)), (21, 21))
        assert cmap.isolines == []
        assert np.all(cmap.energy_eV == 0.0)

    def test_frame_columns(self, quadrupole):
        cmap = contour_map(quadrupole(5e5), "xy", ((-10.0, 10.0), (-10.0, 10.0)), (41, 41), isoline_step=2e-5)
        frame = cmap.to_frame()
        assert frame.columns == ["curve_id", "level_eV", "closed", "x_um", "y_um"]
        assert frame.height == sum(len(iso.points) for iso in cmap.isolines)
        assert cmap.to_dict()["plane"] == "xy"

    def test_conductor_cells_are_masked(self, coarse_ep):
        cmap = contour_map(coarse_ep, "xz", ((-200.0, 200.0), (1400.0, 2000.0)), (21, 31), isoline_step=0.05)
        assert np.isnan(cmap.energy_eV).any()
        assert np.isfinite(cmap.energy_eV).any()

    @pytest.mark.slow
    def test_trap3_isolines(self, preset_ep):
        # Pseudopotential map of trap #3 drawn without the compensation rods
        ep = preset_ep(3)
        g = ep.basis.geometry
        bare = dataclasses.replace(g, electrodes=g.axisymmetric_electrodes)
        ep = ep.with_basis(solve_basis(bare))
        null_um = find_null(ep) / MICRON
        cmap = contour_map(ep, "xz", ((-770.0, 770.0), (910.0, 3190.0)), (155, 229), isoline_step=0.025)
        closed = cmap.closed_around((null_um[0], null_um[2]))
        assert len({iso.level_eV for iso in closed}) >= 7

    @pytest.mark.parametrize("kwargs", [{"plane": "ab"}, {"isoline_step": 0.0}])
    def test_invalid(self, quadrupole, kwargs):
        with pytest.raises(ValueError):
            contour_map(quadrupole(), **kwargs)
