"""
Tests for ion_stylus.compensation.
"""

import dataclasses
import math

import numpy as np
import pytest

from ion_stylus.analysis import find_null
from ion_stylus.compensation import (
    ActuatorBasis,
    LineChargeBasis,
    actuator_basis,
    micromotion_scan,
    quadrupole_pattern,
    radial_axes,
    solve_compensation,
)
from ion_stylus.errors import RankDeficientError
from ion_stylus.model import MICRON, ElectrodeRole
from ion_stylus.presets import preset_geometry
from ion_stylus.pseudopotential import energy_hessian
from ion_stylus.solver import CombinedBasis, stray_field_basis


def synthetic_actuators(fields) -> ActuatorBasis:
    fields = np.asarray(fields, dtype=float)
    roles = tuple(f"v{i}" for i in range(len(fields)))
    return ActuatorBasis(roles, fields, np.zeros((len(fields), 3, 3)), np.zeros(3))


class TestSolveCompensation:
    """Tests for solve_compensation()."""

    def test_full_rank_nulls_the_field(self):
        ab = synthetic_actuators(np.random.default_rng(3).normal(size=(5, 3)) * 100.0)
        stray = np.array([12.0, -3.0, 7.5])
        sol = solve_compensation(ab, stray)
        assert sol.residual_norm < 1e-9
        assert np.allclose(ab.field_of(sol.voltages), -stray)

    def test_minimum_norm_voltages(self):
        ab = synthetic_actuators(np.vstack([np.eye(3), np.eye(3)]))
        sol = solve_compensation(ab, [2.0, 0.0, 0.0])
        assert sol.voltages["v0"] == pytest.approx(-1.0)
        assert sol.voltages["v3"] == pytest.approx(-1.0)

    def test_rank_deficient(self):
        ab = synthetic_actuators([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
        with pytest.raises(RankDeficientError) as err:
            solve_compensation(ab, [1.0, 1.0, 1.0])
        assert np.allclose(np.abs(err.value.unreachable), [[0.0, 0.0, 1.0]])

    def test_non_finite_stray(self):
        with pytest.raises(ValueError):
            solve_compensation(synthetic_actuators(np.eye(3)), [np.nan, 0.0, 0.0])

    def test_to_dict(self):
        sol = solve_compensation(synthetic_actuators(np.eye(3)), [1.0, 2.0, 3.0])
        d = sol.to_dict()
        assert d["voltages_V"] == pytest.approx({"v0": -1.0, "v1": -2.0, "v2": -3.0})
        assert d["residual_norm_V_per_m"] == pytest.approx(0.0)


class TestLineChargeBasis:
    """Tests for the rod model."""

    def test_collocation_point_at_one_volt(self):
        basis = LineChargeBasis(preset_geometry(3))
        for e in preset_geometry(3).rods:
            rod = e.shape
            scale = (rod.axis_distance - rod.radius) / rod.axis_distance
            p = np.array([[rod.x * scale, rod.y * scale, rod.z_top - rod.radius]]) * MICRON
            assert basis.unit_potential(str(e.role), p)[0] == pytest.approx(1.0, rel=1e-9)

    def test_field_is_minus_gradient(self):
        basis = LineChargeBasis(preset_geometry(3))
        p = np.array([100e-6, -50e-6, 1900e-6])
        h = 1e-8
        grad = [(basis.unit_potential("compensation_A", [p + h * d])[0]
                 - basis.unit_potential("compensation_A", [p - h * d])[0]) / (2 * h) for d in np.eye(3)]
        assert np.allclose(basis.unit_field("compensation_A", [p])[0], -np.asarray(grad), rtol=1e-5)

    def test_contains(self):
        basis = LineChargeBasis(preset_geometry(3))
        rod = preset_geometry(3).electrode(ElectrodeRole.COMPENSATION_B).shape
        inside = [[rod.x * MICRON, rod.y * MICRON, 500e-6]]
        assert basis.contains(inside)[0]
        assert not basis.contains([[0.0, 0.0, 1900e-6]])[0]

    def test_roles(self):
        assert LineChargeBasis(preset_geometry(1)).roles == (
            "compensation_A", "compensation_B", "compensation_C", "compensation_D")


class TestActuatorBasis:
    """Tests for actuator_basis() on the coarse trap #3 basis."""

    def test_opposite_rods_mirror_each_other(self, coarse_ep, coarse_basis):
        null = find_null(coarse_ep)
        ab = actuator_basis(preset_geometry(3), null, basis=coarse_basis)
        assert ab.roles[-1] == "center_ground"
        assert ab.fields.shape == (5, 3)
        a, d = ab.fields[ab.roles.index("compensation_A")], ab.fields[ab.roles.index("compensation_D")]
        scale = np.linalg.norm(a)
        assert np.allclose(a[:2], -d[:2], atol=1e-3 * scale)
        assert a[2] == pytest.approx(d[2], rel=1e-3)

    def test_compensates_a_stray_field(self, coarse_ep, coarse_basis):
        null = find_null(coarse_ep)
        ab = actuator_basis(preset_geometry(3), null, basis=coarse_basis)
        sol = solve_compensation(ab, [20.0, -10.0, 5.0])
        assert sol.residual_norm < 1e-3

    def test_no_rods(self):
        g = preset_geometry(3)
        bare = dataclasses.replace(g, electrodes=g.axisymmetric_electrodes)
        with pytest.raises(ValueError, match="no compensation rods"):
            actuator_basis(bare, np.zeros(3))

class TestStrayFieldCompensation:
    """Stray field on the coarse trap #3 with rods, before and after compensation."""

    STRAY = {"stray_x": 20.0, "stray_y": -10.0, "stray_z": 5.0}

    @pytest.fixture(scope="class")
    def ep(self, coarse_ep, coarse_basis):
        return coarse_ep.with_basis(
            CombinedBasis(coarse_basis, LineChargeBasis(preset_geometry(3)), stray_field_basis()))

    def test_displacement_scales_as_inverse_square(self, ep):
        scan = micromotion_scan(ep, self.STRAY, [200.0, 400.0], hint=find_null(ep))
        low, high = scan.frame["displacement_um"].to_list()
        assert high > 0.1
        assert low / high == pytest.approx(4.0, rel=0.1)

    def test_compensation_removes_the_displacement(self, ep, coarse_basis):
        null = find_null(ep)
        before = micromotion_scan(ep, self.STRAY, [200.0, 400.0], hint=null)
        ab = actuator_basis(preset_geometry(3), null, basis=coarse_basis)
        sol = solve_compensation(ab, list(self.STRAY.values()))
        after = micromotion_scan(ep, {**self.STRAY, **sol.voltages}, [200.0, 400.0], hint=null)
        ratio = np.asarray(before.frame["displacement_um"]) / np.asarray(after.frame["displacement_um"])
        assert np.all(ratio >= 10.0)
        assert after.max_pairwise_um < 0.1 * before.max_pairwise_um



class TestMicromotionScan:
    """Tests for micromotion_scan() on a quadrupole with a uniform stray field."""

    def test_stray_field_moves_the_ion(self, quadrupole):
        a, stray = 5e5, 10.0
        ep = quadrupole(a, extra=stray_field_basis())
        scan = micromotion_scan(ep, {"stray_x": stray}, [50.0, 100.0, 200.0], hint=np.zeros(3))
        assert not scan.compensated
        k_x = 2 * ep.kappa * a * a
        dx = scan.frame.filter(scan.frame["U_V"] == 100.0)["dx_um"][0]
        assert dx == pytest.approx(ep.ion.charge * stray / k_x / MICRON, rel=5e-3)
        assert scan.frame["displacement_um"].to_list() == sorted(scan.frame["displacement_um"], reverse=True)

    def test_compensated_without_stray(self, quadrupole):
        ep = quadrupole(5e5, extra=stray_field_basis())
        scan = micromotion_scan(ep, {}, [50.0, 200.0], hint=np.zeros(3))
        assert scan.compensated
        assert scan.max_pairwise_um < 1e-3

    def test_predicted_displacements_match_scan(self, quadrupole):
        ep = quadrupole(5e5, extra=stray_field_basis())
        stray = np.array([10.0, 0.0, 0.0])
        sol = solve_compensation(synthetic_actuators(np.eye(3)), stray)
        k = energy_hessian(ep, {}, np.zeros(3))
        pred = sol.predicted_displacements(k, 100.0, [50.0, 200.0], ep.ion.charge, residual=False)
        scan = micromotion_scan(ep, {"stray_x": 10.0}, [50.0, 200.0], hint=np.zeros(3))
        assert np.allclose(pred["dx_um"].to_numpy(), scan.frame["dx_um"].to_numpy(), rtol=5e-3)
        assert np.allclose(sol.predicted_displacements(k, 100.0, [50.0], ep.ion.charge)["dx_um"].to_numpy(), 0.0)

    def test_needs_two_amplitudes(self, quadrupole):
        with pytest.raises(ValueError):
            micromotion_scan(quadrupole(), {}, [100.0], hint=np.zeros(3))


class TestQuadrupolePattern:
    """Tests for quadrupole_pattern() and radial_axes()."""

    def test_pairs(self):
        assert quadrupole_pattern("AD", 2.0) == {"compensation_A": 2.0, "compensation_D": 2.0}
        assert quadrupole_pattern("BC", -1.0) == {"compensation_B": -1.0, "compensation_C": -1.0}

    def test_unknown_pair(self):
        with pytest.raises(ValueError):
            quadrupole_pattern("AB", 1.0)

    @pytest.mark.slow
    def test_pair_swap_rotates_axes(self, coarse_ep, coarse_basis):
        ep = coarse_ep.with_basis(CombinedBasis(coarse_basis, LineChargeBasis(preset_geometry(3))))
        ad = radial_axes(ep, quadrupole_pattern("AD", 5.0))
        bc = radial_axes(ep, quadrupole_pattern("BC", 5.0))
        assert ad.splitting_hz > 0
        cos = abs(float(ad.axes["radial_low"] @ bc.axes["radial_low"]))
        assert math.degrees(math.acos(min(cos, 1.0))) == pytest.approx(90.0, abs=5.0)
