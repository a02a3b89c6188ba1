"""
Tests for ion_stylus.solver: boundary-element basis potentials, analytic
bases and the on-disk cache.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from ion_stylus import cache
from ion_stylus.errors import GeometryError, InsideConductorError
from ion_stylus.model import MICRON, Electrode, ElectrodeRole, Tube
from ion_stylus.presets import preset_geometry
from ion_stylus.pseudopotential import total_energy
from ion_stylus.solver import (
    STRAY_ROLES,
    CombinedBasis,
    PolynomialBasis,
    convergence_study,
    eval as eval_field,
    export_grid,
    solve_basis,
    solve_electrodes,
    stray_field_basis,
    tabulate_axisymmetric,
)

COAX_INNER_UM = 100.0
COAX_OUTER_UM = 300.0


def coax(length_um: float = 2000.0):
    return (
        Electrode(ElectrodeRole.RF, Tube(50.0, COAX_INNER_UM, -length_um, length_um)),
        Electrode(ElectrodeRole.CENTER_GROUND, Tube(COAX_OUTER_UM, 350.0, -length_um, length_um)),
    )


@pytest.fixture(scope="module")
def coax_basis():
    return solve_electrodes(coax(), resolution=3)


def above_trap(*offsets_um):
    """Points (m) above the trap #3 centre electrode, offsets in um."""
    return np.array([(x, y, 1610.0 + z) for x, y, z in offsets_um]) * MICRON


class TestCoaxialOracle:
    """Long coaxial tubes against ln(b / r) / ln(b / a)."""

    @pytest.mark.parametrize("r_um", [150.0, 200.0, 250.0])
    def test_potential_between_tubes(self, coax_basis, r_um):
        expected = math.log(COAX_OUTER_UM / r_um) / math.log(COAX_OUTER_UM / COAX_INNER_UM)
        phi = coax_basis.potential({"rf": 1.0}, [[r_um * MICRON, 0.0, 0.0]])[0]
        assert phi == pytest.approx(expected, rel=0.01)

    def test_radial_field(self, coax_basis):
        r = 200.0 * MICRON
        expected = 1.0 / (r * math.log(COAX_OUTER_UM / COAX_INNER_UM))
        e = coax_basis.field({"rf": 1.0}, [[0.0, r, 0.0]])[0]
        assert e[1] == pytest.approx(expected, rel=0.01)
        assert abs(e[2]) < 0.01 * expected

    def test_boundary_conditions(self, coax_basis):
        d = coax_basis.diagnostics
        assert math.isfinite(d.condition_number)
        assert d.n_panels == len(coax_basis.mesh)
        assert coax_basis.roles == ("rf", "center_ground")
        assert coax_basis.reference_role is None


class TestFarField:
    """Tests for the decay of a single isolated conductor."""

    def test_monopole_decay(self):
        basis = solve_electrodes((Electrode(ElectrodeRole.RF, Tube(50.0, 100.0, 0.0, 200.0)),), resolution=1)
        z = np.geomspace(0.1, 1.0, 10)
        phi = basis.potential({"rf": 1.0}, np.column_stack([np.zeros_like(z), np.zeros_like(z), z]))
        exponent = np.polyfit(np.log(z), np.log(phi), 1)[0]
        assert exponent == pytest.approx(-1.0, abs=0.01)


class TestBasisSet:
    """Tests for superposition on the coarse trap #3 basis."""

    def test_roles_and_gauge(self, coarse_basis):
        assert set(coarse_basis.roles) == {"rf", "center_ground", "outer_ground_plane"}
        assert coarse_basis.reference_role == "outer_ground_plane"

    def test_linearity(self, coarse_basis):
        pts = above_trap((0, 0, 200), (40, -30, 300))
        combined = coarse_basis.potential({"rf": 3.0, "center_ground": -1.0}, pts)
        parts = 3.0 * coarse_basis.unit_potential("rf", pts) - coarse_basis.unit_potential("center_ground", pts)
        assert np.allclose(combined, parts, rtol=1e-10, atol=1e-12)

    def test_common_offset_is_a_constant(self, coarse_basis):
        pts = above_trap((0, 0, 250), (50, 0, 250))
        v = {"rf": 1.0, "center_ground": 0.5}
        shifted = {"rf": 2.0, "center_ground": 1.5, "outer_ground_plane": 1.0}
        assert np.allclose(coarse_basis.potential(shifted, pts) - coarse_basis.potential(v, pts), 1.0)
        assert np.allclose(coarse_basis.field(shifted, pts), coarse_basis.field(v, pts))

    def test_common_offset_shifts_energy_by_one_ev(self, coarse_ep):
        p = above_trap((0, 0, 290))[0]
        shifted = {role: 1.0 for role in coarse_ep.basis.roles}
        assert total_energy(coarse_ep, shifted, p) - total_energy(coarse_ep, {}, p) == pytest.approx(1.0, abs=1e-9)

    def test_on_axis_field_is_axial(self, coarse_basis):
        e = coarse_basis.field({"rf": 1.0}, above_trap((0, 0, 100), (0, 0, 400)))
        assert np.all(e[:, :2] == 0.0)
        assert np.all(np.abs(e[:, 2]) > 0)

    def test_rotational_symmetry(self, coarse_basis):
        a = coarse_basis.field({"rf": 1.0}, above_trap((60, 0, 250)))[0]
        b = coarse_basis.field({"rf": 1.0}, above_trap((0, 60, 250)))[0]
        assert b[1] == pytest.approx(a[0], rel=1e-9)
        assert b[2] == pytest.approx(a[2], rel=1e-9)

    def test_hessian_is_traceless(self, coarse_basis):
        s = eval_field(coarse_basis, {"rf": 1.0}, above_trap((30, 20, 280))[0])
        assert abs(np.trace(s.hessian)) < 1e-3 * np.linalg.norm(s.hessian)
        assert np.allclose(s.hessian, s.hessian.T)

    def test_field_is_minus_gradient(self, coarse_basis):
        p = above_trap((30, 20, 280))[0]
        h = 1e-7
        grad = np.array([
            (coarse_basis.potential({"rf": 1.0}, [p + h * d])[0] - coarse_basis.potential({"rf": 1.0}, [p - h * d])[0])
            / (2 * h)
            for d in np.eye(3)
        ])
        e = coarse_basis.field({"rf": 1.0}, [p])[0]
        assert np.allclose(e, -grad, rtol=1e-4, atol=1e-6 * np.linalg.norm(e))

    def test_laplace_everywhere(self, coarse_basis):
        rng = np.random.default_rng(7)
        pts = np.column_stack([
            rng.uniform(-200.0, 200.0, 100),
            rng.uniform(-200.0, 200.0, 100),
            1610.0 + rng.uniform(100.0, 600.0, 100),
        ]) * MICRON
        _, _, hess = coarse_basis.superpose({"rf": 1.0, "center_ground": 0.3}, pts, order=2)
        trace = np.abs(np.trace(hess, axis1=1, axis2=2))
        assert np.all(trace < 1e-3 * np.linalg.norm(hess, axis=(1, 2)))

    def test_diagnostics_are_read_only(self, coarse_basis):
        with pytest.raises(AttributeError):
            coarse_basis.diagnostics = None
        other = coarse_basis.with_diagnostics(replace(coarse_basis.diagnostics, laplace_residual=1.0))
        assert other is not coarse_basis
        assert other.diagnostics.laplace_residual == 1.0
        assert coarse_basis.diagnostics.laplace_residual < 1e-2

    def test_laplace_residual(self, coarse_basis):
        assert coarse_basis.diagnostics.laplace_residual < 1e-2

    def test_inside_conductor(self, coarse_basis):
        with pytest.raises(InsideConductorError):
            coarse_basis.eval({"rf": 1.0}, [75.0 * MICRON, 0.0, 1000.0 * MICRON])

    def test_unknown_role(self, coarse_basis):
        with pytest.raises(ValueError, match="Unknown electrode roles"):
            coarse_basis.potential({"compensation_A": 1.0}, above_trap((0, 0, 290)))

    def test_tabulate(self, coarse_basis):
        rho = np.linspace(0.0, 200e-6, 5)
        z = np.linspace(1700e-6, 2000e-6, 4)
        phi, e_rho, e_z = tabulate_axisymmetric(coarse_basis, {"rf": 1.0}, rho, z)
        assert phi.shape == e_rho.shape == e_z.shape == (5, 4)
        assert np.all(e_rho[0] == 0.0)

    def test_export_grid_drops_conductor_points(self, coarse_basis):
        pts = np.vstack([above_trap((0, 0, 290), (100, 0, 290)), [[75e-6, 0.0, 1000e-6]]])
        frame = export_grid(coarse_basis, {"rf": 1.0}, pts)
        assert frame.height == 2
        assert frame.columns == ["x_um", "y_um", "z_um", "phi_V", "Ex_V_per_m", "Ey_V_per_m", "Ez_V_per_m"]
        assert frame["z_um"].to_list() == pytest.approx([1900.0, 1900.0])


class TestSolveBasis:
    """Tests for solve_basis() and convergence_study()."""

    def test_rods_are_screened(self, coarse_basis):
        g = preset_geometry(3)
        bare = solve_electrodes(tuple(e for e in g.electrodes if e.is_axisymmetric), resolution=1)
        assert len(coarse_basis.mesh) > len(bare.mesh)
        assert np.any(coarse_basis.mesh.owner == -1)
        assert coarse_basis.diagnostics.n_panels == len(coarse_basis.mesh)
        # Grounded rods pull the rf potential down everywhere above the trap
        pts = above_trap((0, 0, 150), (0, 0, 300), (100, 0, 300), (0, 0, 800))
        with_rods = coarse_basis.unit_potential("rf", pts)
        without = bare.unit_potential("rf", pts)
        assert np.all(with_rods < without)
        assert np.all(with_rods > 0.5 * without)

    def test_invalid_geometry(self):
        g = preset_geometry(1)
        bad = type(g)(electrodes=g.electrodes[1:], delta_h=g.delta_h, h_rf=g.h_rf)
        with pytest.raises(GeometryError):
            solve_basis(bad, resolution=1)

    def test_memoised(self):
        g = preset_geometry(3)
        assert solve_basis(g, resolution=1) is solve_basis(g, resolution=1)

    def test_convergence_needs_two_levels(self):
        with pytest.raises(ValueError):
            convergence_study(coax(), [1])

    def test_convergence_study(self):
        frame = convergence_study(coax(500.0), [1, 2], probes_um=[[200.0, 0.0, 0.0], [0.0, 0.0, 800.0]])
        assert frame["level"].to_list() == [1, 2]
        assert frame["n_panels"][1] > frame["n_panels"][0]
        assert frame["probe_change"][0] is None
        assert frame["probe_change"][1] < 0.05

    def test_disk_cache(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cache, "CACHE_DIR", tmp_path)
        g = preset_geometry(2)
        solved = solve_basis(g, resolution=1, use_cache=True)
        assert cache.is_cached(cache.cache_key(g, 1))
        loaded = solve_basis(g, resolution=1, use_cache=True)
        assert loaded is not solved
        p = [[0.0, 0.0, 1600e-6]]
        assert loaded.potential({"rf": 1.0}, p)[0] == pytest.approx(solved.potential({"rf": 1.0}, p)[0], rel=1e-12)
        assert loaded.diagnostics == solved.diagnostics
        assert cache.clear_cache() == 1

    def test_cache_key_tracks_solver_revision(self, monkeypatch):
        g = preset_geometry(2)
        before = cache.cache_key(g, 1)
        monkeypatch.setattr(cache, "SOLVER_REVISION", cache.SOLVER_REVISION + 1)
        assert cache.cache_key(g, 1) != before

    def test_cache_miss(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cache, "CACHE_DIR", tmp_path)
        with pytest.raises(FileNotFoundError):
            cache.load_basis("0" * 32)


class TestAnalyticBases:
    """Tests for PolynomialBasis, stray_field_basis() and CombinedBasis."""

    def test_stray_field(self):
        basis = stray_field_basis()
        assert basis.roles == STRAY_ROLES
        e = basis.field({"stray_x": 5.0, "stray_z": -2.0}, [[1e-4, 0.0, 0.0]])[0]
        assert np.allclose(e, [5.0, 0.0, -2.0])
        assert basis.potential({"stray_x": 5.0}, [[1e-4, 0.0, 0.0]])[0] == pytest.approx(-5e-4)

    def test_polynomial_hessian(self):
        h = np.diag([1.0, 2.0, -3.0])
        basis = PolynomialBasis({"a": (0.5, np.zeros(3), h)}, origin=(0.0, 0.0, 1.0))
        s = basis.eval({"a": 2.0}, [0.0, 0.0, 1.0])
        assert s.potential == pytest.approx(1.0)
        assert np.allclose(s.hessian, 2.0 * h)

    def test_combined(self, coarse_basis):
        combo = CombinedBasis(coarse_basis, stray_field_basis())
        assert combo.reference_role == "outer_ground_plane"
        assert combo.geometry is coarse_basis.geometry
        pts = above_trap((0, 0, 290))
        e = combo.field({"rf": 1.0, "stray_y": 3.0}, pts)[0]
        assert np.allclose(e, coarse_basis.field({"rf": 1.0}, pts)[0] + [0.0, 3.0, 0.0])

    def test_combined_offset_applies_to_trap_part_only(self, coarse_basis):
        combo = CombinedBasis(coarse_basis, stray_field_basis())
        pts = above_trap((0, 0, 290))
        delta = combo.potential({"outer_ground_plane": 1.0}, pts) - combo.potential({}, pts)
        assert delta[0] == pytest.approx(1.0)

    def test_duplicate_roles(self):
        with pytest.raises(ValueError, match="more than one basis"):
            CombinedBasis(stray_field_basis(), stray_field_basis())
