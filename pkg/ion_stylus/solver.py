"""
Axisymmetric boundary-element solver and superposable potential bases.

Each axisymmetric conductor is held at 1 V in turn (all others at 0 V) and the
Laplace problem with open boundary is solved for the surface charge on ring
panels. The resulting ``BasisSet`` evaluates potential, field and Hessian at
any vacuum point for any voltage assignment by superposition. Grounded
compensation rods screen these solutions through one shared charge density
per ring of rods.

The far boundary is tied to the outer ground plane: superposition is taken
relative to the voltage on the ``reference_role``, so adding a constant to
every electrode shifts the potential everywhere by that constant.
"""

from __future__ import annotations

import abc
import logging
import math
import time
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np
import polars as pl
from scipy import linalg

from ion_stylus import cache
from ion_stylus.errors import GeometryError, InsideConductorError, SolverError
from ion_stylus.kernels import cylindrical_to_cartesian, fd_hessian, line_potential, ring_field, ring_potential
from ion_stylus.mesh import PanelMesh, RodShell, build_mesh, join_meshes, rod_shells, shell_mesh
from ion_stylus.model import (
    MICRON,
    Electrode,
    ElectrodeRole,
    Plane,
    TrapGeometry,
    Tube,
    validate_geometry,
)

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 3
TOL_BC = 1e-3
TOL_LAP = 1e-3
HESSIAN_STEP = 0.5e-6  # m
MAX_CONDITION = 1e13

N_GAUSS = 8
N_SELF = 16
N_NEAR_SUB = 8
NEAR_FACTOR = 2.0
CHUNK_ELEMENTS = 2_000_000

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(N_GAUSS)
_SELF_X, _SELF_W = np.polynomial.legendre.leggauss(N_SELF)


@dataclass(frozen=True)
class FieldSample:
    """Potential (V), field (V/m) and Hessian (V/m^2) at a point (m)."""

    position: np.ndarray
    potential: float
    field: np.ndarray
    hessian: np.ndarray


class PotentialBasis(abc.ABC):
    """A set of unit-voltage potentials that superpose linearly.

    Subclasses provide per-role unit potentials and fields; this class adds
    voltage bookkeeping, the reference-role gauge and conductor checks.
    """

    reference_role: str | None = None
    geometry: TrapGeometry | None = None

    @property
    @abc.abstractmethod
    def roles(self) -> tuple[str, ...]:
        ...

    @property
    def axisymmetric_roles(self) -> frozenset:
        return frozenset()

    @abc.abstractmethod
    def unit_potential(self, role: str, points: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def unit_field(self, role: str, points: np.ndarray) -> np.ndarray:
        ...

    def unit_hessian(self, role: str, points: np.ndarray) -> np.ndarray:
        return fd_hessian(lambda p: self.unit_field(role, p), points, HESSIAN_STEP)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points lying inside (or on) a conductor."""
        return np.zeros(len(np.atleast_2d(points)), dtype=bool)

    def parts(self) -> list["PotentialBasis"]:
        return [self]

    def owns(self, role: str) -> bool:
        return role in self.roles

    def weights(self, voltages: Mapping[str, float]) -> tuple[float, dict[str, float]]:
        """Split voltages into the gauge offset and per-role weights."""
        voltages = {str(k): v for k, v in voltages.items()}
        ref = self.reference_role
        v_ref = float(voltages.get(ref, 0.0)) if ref is not None else 0.0
        w = {}
        for role in self.roles:
            if role == ref:
                continue
            v = float(voltages.get(role, 0.0)) - v_ref
            if v != 0.0:
                w[role] = v
        return v_ref, w

    def check_voltages(self, voltages: Mapping[str, float]) -> None:
        unknown = sorted(str(k) for k, v in voltages.items() if v != 0 and not self.owns(str(k)))
        if unknown:
            raise ValueError(f"Unknown electrode roles {unknown}; basis has {sorted(map(str, self.roles))}")

    def superpose(self, voltages: Mapping[str, float], points: np.ndarray, order: int = 2):
        """Superposed (potential, field, hessian) arrays at ``points`` (m).

        ``order`` 0 returns only the potential, 1 adds the field, 2 the Hessian;
        missing entries are None. No conductor check is made.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(points)
        v_ref, w = self.weights(voltages)
        phi = np.full(n, v_ref)
        fld = np.zeros((n, 3)) if order >= 1 else None
        hess = np.zeros((n, 3, 3)) if order >= 2 else None
        for role, v in w.items():
            phi += v * self.unit_potential(role, points)
            if order >= 1:
                fld += v * self.unit_field(role, points)
            if order >= 2:
                hess += v * self.unit_hessian(role, points)
        return phi, fld, hess

    def require_vacuum(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        inside = self.contains(points)
        if np.any(inside):
            bad = points[np.argmax(inside)] / MICRON
            raise InsideConductorError(f"Point {np.round(bad, 3).tolist()} um lies inside a conductor")
        return points

    def eval(self, voltages: Mapping[str, float], point) -> FieldSample:
        """FieldSample at one vacuum point.

        Raises:
            InsideConductorError: If the point lies inside a conductor
        """
        self.check_voltages(voltages)
        p = self.require_vacuum(point)
        phi, fld, hess = self.superpose(voltages, p, order=2)
        return FieldSample(position=p[0].copy(), potential=float(phi[0]), field=fld[0], hessian=hess[0])

    def potential(self, voltages: Mapping[str, float], points, check: bool = True) -> np.ndarray:
        self.check_voltages(voltages)
        p = self.require_vacuum(points) if check else np.atleast_2d(points)
        return self.superpose(voltages, p, order=0)[0]

    def field(self, voltages: Mapping[str, float], points, check: bool = True) -> np.ndarray:
        self.check_voltages(voltages)
        p = self.require_vacuum(points) if check else np.atleast_2d(points)
        return self.superpose(voltages, p, order=1)[1]


@dataclass(frozen=True)
class SolverDiagnostics:
    """Mesh size, conditioning and residual checks of a boundary-element solve."""

    resolution: int
    n_panels: int
    condition_number: float
    bc_error: float  # max |phi - prescribed| over surface samples, V per V
    bc_fraction_within_tol: float
    laplace_residual: float  # max relative 6-point residual over probes
    assembly_seconds: float = 0.0
    solve_seconds: float = 0.0


class BasisSet(PotentialBasis):
    """Boundary-element solution: one surface-charge vector per electrode role."""

    def __init__(
        self,
        mesh: PanelMesh,
        charges: np.ndarray,
        electrodes: Sequence[Electrode],
        diagnostics: SolverDiagnostics,
        geometry: TrapGeometry | None = None,
    ):
        self.mesh = mesh
        self.charges = np.asarray(charges, dtype=float)
        self.charges.setflags(write=False)
        self.electrodes = tuple(e for e in electrodes if e.is_axisymmetric)
        self._diagnostics = diagnostics
        self.geometry = geometry
        self.reference_role = (str(ElectrodeRole.OUTER_GROUND_PLANE)
                               if str(ElectrodeRole.OUTER_GROUND_PLANE) in mesh.roles else None)
        self._nodes_r, self._nodes_z, self._nodes_w = _gauss_nodes(mesh)

    @property
    def diagnostics(self) -> SolverDiagnostics:
        return self._diagnostics

    def with_diagnostics(self, diagnostics: SolverDiagnostics) -> "BasisSet":
        """Same solution with other diagnostics attached."""
        return BasisSet(self.mesh, self.charges, self.electrodes, diagnostics, self.geometry)

    @property
    def roles(self) -> tuple[str, ...]:
        return self.mesh.roles

    @property
    def axisymmetric_roles(self) -> frozenset:
        return frozenset(self.roles)

    @property
    def resolution(self) -> int:
        return self.diagnostics.resolution

    def _role_vector(self, w: Mapping[str, float]) -> np.ndarray:
        vec = np.zeros(len(self.roles))
        for role, v in w.items():
            vec[self.roles.index(role)] = v
        return vec

    def _panel_charges(self, w: Mapping[str, float]) -> np.ndarray:
        q = self.charges @ self._role_vector(w)
        return (self._nodes_w * q[:, None]).ravel()

    def _sum_potential(self, nodal_q: np.ndarray, points: np.ndarray) -> np.ndarray:
        rho, z, _, _ = cylindrical_to_cartesian(points)
        nr, nz = self._nodes_r.ravel(), self._nodes_z.ravel()
        out = np.empty(len(points))
        step = max(1, CHUNK_ELEMENTS // len(nr))
        for i in range(0, len(points), step):
            k = ring_potential(nr[None, :], nz[None, :], rho[i:i + step, None], z[i:i + step, None])
            out[i:i + step] = k @ nodal_q
        return out

    def _sum_field(self, nodal_q: np.ndarray, points: np.ndarray) -> np.ndarray:
        rho, z, ux, uy = cylindrical_to_cartesian(points)
        nr, nz = self._nodes_r.ravel(), self._nodes_z.ravel()
        e_rho = np.empty(len(points))
        e_z = np.empty(len(points))
        step = max(1, CHUNK_ELEMENTS // len(nr))
        for i in range(0, len(points), step):
            kr, kz = ring_field(nr[None, :], nz[None, :], rho[i:i + step, None], z[i:i + step, None])
            e_rho[i:i + step] = kr @ nodal_q
            e_z[i:i + step] = kz @ nodal_q
        return np.column_stack([e_rho * ux, e_rho * uy, e_z])

    def unit_potential(self, role: str, points: np.ndarray) -> np.ndarray:
        return self._sum_potential(self._panel_charges({role: 1.0}), np.atleast_2d(points))

    def unit_field(self, role: str, points: np.ndarray) -> np.ndarray:
        return self._sum_field(self._panel_charges({role: 1.0}), np.atleast_2d(points))

    def superpose(self, voltages: Mapping[str, float], points: np.ndarray, order: int = 2):
        # Superpose surface charges first, then run the kernels once
        points = np.atleast_2d(np.asarray(points, dtype=float))
        v_ref, w = self.weights(voltages)
        n = len(points)
        if not w:
            return (np.full(n, v_ref), np.zeros((n, 3)) if order >= 1 else None,
                    np.zeros((n, 3, 3)) if order >= 2 else None)
        q = self._panel_charges(w)
        phi = v_ref + self._sum_potential(q, points)
        fld = self._sum_field(q, points) if order >= 1 else None
        hess = fd_hessian(lambda p: self._sum_field(q, p), points, HESSIAN_STEP) if order >= 2 else None
        return phi, fld, hess

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        rho = np.hypot(points[:, 0], points[:, 1]) / MICRON
        z = points[:, 2] / MICRON
        return _inside_electrodes(self.electrodes, rho, z)


def _inside_electrodes(electrodes: Iterable[Electrode], rho: np.ndarray, z: np.ndarray, tol: float = 1e-3):
    inside = np.zeros(len(rho), dtype=bool)
    for e in electrodes:
        s = e.shape
        if isinstance(s, Tube):
            inside |= ((rho >= s.inner_radius - tol) & (rho <= s.outer_radius + tol)
                       & (z >= s.z_bottom - tol) & (z <= s.z_top + tol))
        elif isinstance(s, Plane):
            inside |= ((np.abs(z - s.z) <= tol) & (rho >= s.inner_radius - tol) & (rho <= s.outer_radius + tol))
    return inside


def _gauss_nodes(mesh: PanelMesh):
    frac = 0.5 * (_GAUSS_X + 1.0)
    r = mesh.r0[:, None] + frac[None, :] * (mesh.r1 - mesh.r0)[:, None]
    z = mesh.z0[:, None] + frac[None, :] * (mesh.z1 - mesh.z0)[:, None]
    w = 0.5 * _GAUSS_W[None, :] * mesh.length[:, None]
    return r, z, w


def _panel_integral(mesh: PanelMesh, j: int, r: float, z: float, frac: float | None = None) -> float:
    """Potential at (r, z) of panel j carrying unit reduced charge.

    ``frac`` marks a target lying on the panel itself; the integral is then
    split there and the log singularity removed by an s = t^2 substitution.
    Otherwise a composite rule resolves nearby targets.
    """
    length = mesh.length[j]
    dr, dz = mesh.r1[j] - mesh.r0[j], mesh.z1[j] - mesh.z0[j]
    if frac is None:
        sub = np.arange(N_NEAR_SUB)[:, None]
        f = ((sub + 0.5 * (_GAUSS_X[None, :] + 1.0)) / N_NEAR_SUB).ravel()
        wts = np.tile(0.5 * _GAUSS_W / N_NEAR_SUB, N_NEAR_SUB) * length
    else:
        t = 0.5 * (_SELF_X + 1.0)
        wt = 0.5 * _SELF_W
        h_left, h_right = frac, 1.0 - frac
        f = np.concatenate([frac - h_left * t ** 2, frac + h_right * t ** 2])
        wts = np.concatenate([2 * h_left * t * wt, 2 * h_right * t * wt]) * length
    a = mesh.r0[j] + f * dr
    zr = mesh.z0[j] + f * dz
    return float(np.sum(wts * ring_potential(a, zr, r, z)))


def _influence_matrix(
    mesh: PanelMesh,
    tr: np.ndarray,
    tz: np.ndarray,
    host: np.ndarray | None = None,
    host_frac: float = 0.5,
):
    """Potential at targets (tr, tz) from every panel at unit reduced charge.

    ``host[i]`` is the panel target i lies on (None for targets off the
    surface); that entry and near panels are integrated accurately, the rest
    by plain Gauss quadrature.
    """
    nodes_r, nodes_z, nodes_w = _gauss_nodes(mesh)
    n_panels = len(mesh)
    out = np.empty((len(tr), n_panels))
    step = max(1, CHUNK_ELEMENTS // nodes_r.size)
    for i in range(0, len(tr), step):
        k = ring_potential(nodes_r[None], nodes_z[None], tr[i:i + step, None, None], tz[i:i + step, None, None])
        out[i:i + step] = np.sum(k * nodes_w[None], axis=2)

    mid_r, mid_z = mesh.midpoints
    length = mesh.length
    for i in range(len(tr)):
        dist = np.hypot(mid_r - tr[i], mid_z - tz[i])
        near = np.nonzero(dist < NEAR_FACTOR * length)[0]
        own = -1 if host is None else host[i]
        for j in near:
            if j != own:
                out[i, j] = _panel_integral(mesh, j, tr[i], tz[i])
        if own >= 0:
            out[i, own] = _panel_integral(mesh, own, tr[i], tz[i], frac=host_frac)
    return out


def _laplace_probes(electrodes: Sequence[Electrode]) -> np.ndarray:
    tubes = [e.shape for e in electrodes if isinstance(e.shape, Tube)]
    z_top = max((s.z_top for s in tubes), default=0.0)
    r_max = max((s.outer_radius for s in tubes), default=100.0)
    pts = []
    for dz in (0.25, 0.5, 1.0):
        for rho in (0.0, 0.3):
            pts.append((rho * r_max, 0.0, z_top + dz * r_max))
    pts = np.asarray(pts)
    inside = _inside_electrodes(electrodes, np.hypot(pts[:, 0], pts[:, 1]), pts[:, 2], tol=20.0)
    return pts[~inside] * MICRON


def _laplace_residual(basis: BasisSet, probes: np.ndarray, step: float = 2e-6) -> float:
    """Max over roles/probes of |sum d_i| / sum |d_i| for 6-point second differences."""
    worst = 0.0
    if len(probes) == 0:
        return worst
    offsets = np.concatenate([np.eye(3), -np.eye(3)]) * step
    for role in basis.roles:
        pts = np.concatenate([probes[:, None, :] + offsets[None], probes[:, None, :]], axis=1).reshape(-1, 3)
        phi = basis.unit_potential(role, pts).reshape(len(probes), 7)
        d = phi[:, :3] + phi[:, 3:6] - 2 * phi[:, 6:7]
        scale = np.sum(np.abs(d), axis=1)
        ok = scale > 0
        if np.any(ok):
            worst = max(worst, float(np.max(np.abs(np.sum(d[ok], axis=1)) / scale[ok])))
    return worst


def _shell_collapse(mesh: PanelMesh, n: int, n_shells: int) -> np.ndarray:
    """Map from the n panel charges plus one density per shell to every panel."""
    collapse = np.zeros((len(mesh), n + n_shells))
    collapse[np.arange(n), np.arange(n)] = 1.0
    if n_shells:
        shell = mesh.segment[n:] - mesh.segment[n]
        collapse[np.arange(n, len(mesh)), n + shell] = 1.0
    return collapse


def _rod_rows(mesh: PanelMesh, shells: Sequence[RodShell], collapse: np.ndarray, n: int) -> np.ndarray:
    """One row per rod ring holding it at 0 V at its collocation point.

    Panels and other rings act through their ring potential. A ring's own
    rods act as exact line charges, each carrying ``2 pi R / n_rods`` of the
    shell's reduced surface charge.
    """
    rows = []
    for s, shell in enumerate(shells):
        x, y, z = (c * MICRON for c in shell.collocation_point())
        row = _influence_matrix(mesh, np.array([math.hypot(x, y)]), np.array([z]))[0] @ collapse
        dist = np.array([math.hypot(x - rod.x * MICRON, y - rod.y * MICRON) for rod in shell.rods])
        dist = np.maximum(dist, shell.rod_radius * MICRON)
        share = 2 * math.pi * shell.axis_distance * MICRON / len(shell.rods)
        row[n + s] = share * float(np.sum(line_potential(shell.z_bottom * MICRON, shell.z_top * MICRON, dist, z)))
        rows.append(row)
    return np.array(rows)


def solve_electrodes(
    electrodes: Sequence[Electrode],
    resolution: int = DEFAULT_RESOLUTION,
    geometry: TrapGeometry | None = None,
    tol_bc: float = TOL_BC,
) -> BasisSet:
    """Solve the unit-potential problem for every axisymmetric electrode role.

    Rods are held at 0 V in every solution. Each ring of identical rods is
    screened by its azimuthal average, a uniformly charged cylinder with one
    shared density fixed by the rod collocation point; the rods' own roles
    are served by ``compensation.LineChargeBasis``. No TrapGeometry role
    checks are made; use ``solve_basis`` for trap geometries.

    Raises:
        SolverError: If the boundary system is singular or ill-conditioned
    """
    mesh = build_mesh(electrodes, resolution)
    n = len(mesh)
    shells = rod_shells(electrodes)
    if shells:
        mesh = join_meshes(mesh, shell_mesh(shells, resolution, mesh.roles, int(mesh.segment.max()) + 1))
    logger.info("Boundary-element solve: %d panels, %d rod rings, %d roles, level %d",
                n, len(shells), len(mesh.roles), resolution)

    st = time.time()
    collapse = _shell_collapse(mesh, n, len(shells))
    mid_r, mid_z = mesh.midpoints
    matrix = _influence_matrix(mesh, mid_r[:n], mid_z[:n], np.arange(n), 0.5) @ collapse
    if shells:
        matrix = np.vstack([matrix, _rod_rows(mesh, shells, collapse, n)])
    assembly = time.time() - st
    logger.info("Matrix assembly: %.0f ms (%.0f MB)", assembly * 1e3, matrix.nbytes / 1e6)

    if not np.all(np.isfinite(matrix)):
        raise SolverError("Boundary matrix has non-finite entries; check for touching conductors", condition=np.inf)
    condition = float(np.linalg.cond(matrix))
    logger.info("Condition estimate: %.3g", condition)
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise SolverError(
            f"Boundary system is ill-conditioned (condition {condition:.3g} > {MAX_CONDITION:.0e}); "
            "check for overlapping or coincident conductors",
            condition=condition,
        )

    st = time.time()
    rhs = np.zeros((len(matrix), len(mesh.roles)))
    rhs[np.arange(n), mesh.owner[:n]] = 1.0
    charges = collapse @ linalg.lu_solve(linalg.lu_factor(matrix), rhs)
    solve_time = time.time() - st
    logger.info("Matrix solve: %.0f ms", solve_time * 1e3)

    # Boundary fidelity away from the collocation points
    samples = []
    for frac in (0.25, 0.75):
        sr, sz = mesh.point_at(frac)
        samples.append(_influence_matrix(mesh, sr[:n], sz[:n], np.arange(n), frac) @ charges)
    surface = np.concatenate(samples)
    error = np.abs(surface - np.concatenate([rhs[:n], rhs[:n]]))
    bc_error = float(np.max(error))
    bc_fraction = float(np.mean(np.all(error <= tol_bc, axis=1)))

    diagnostics = SolverDiagnostics(resolution, len(mesh), condition, bc_error, bc_fraction, 0.0, assembly,
                                    solve_time)
    trial = BasisSet(mesh, charges, electrodes, diagnostics, geometry)
    residual = _laplace_residual(trial, _laplace_probes(trial.electrodes))
    logger.info("bc error %.2e (%.1f%% within tol), laplace residual %.2e", bc_error, 100 * bc_fraction, residual)
    return trial.with_diagnostics(replace(diagnostics, laplace_residual=residual))


@lru_cache(maxsize=16)
def _solve_cached(g: TrapGeometry, resolution: int) -> BasisSet:
    return solve_electrodes(g.electrodes, resolution, geometry=g)


def solve_basis(g: TrapGeometry, resolution: int = DEFAULT_RESOLUTION, use_cache: bool = False) -> BasisSet:
    """Solve the basis potentials of a trap geometry.

    Results are memoised per (geometry, resolution); with ``use_cache`` they
    are also stored on disk under ``cache.get_cache_dir()``.

    Raises:
        GeometryError: If validate_geometry reports violations
        SolverError: If the boundary system is ill-conditioned
    """
    violations = validate_geometry(g)
    if violations:
        raise GeometryError(violations)
    if use_cache:
        key = cache.cache_key(g, resolution)
        if cache.is_cached(key):
            logger.info("Basis cache hit %s", key)
            mesh, charges, diagnostics = cache.load_basis(key)
            return BasisSet(mesh, charges, g.electrodes, SolverDiagnostics(**diagnostics), g)
        logger.info("Basis cache miss %s", key)
        basis = _solve_cached(g, resolution)
        cache.save_basis(key, basis.mesh, basis.charges, basis.diagnostics.__dict__)
        return basis
    return _solve_cached(g, resolution)


def eval(basis: PotentialBasis, voltages: Mapping[str, float], point) -> FieldSample:  # noqa: A001
    """Superposed potential, field and Hessian at a vacuum point (m)."""
    return basis.eval(voltages, point)


def convergence_study(
    g: TrapGeometry | Sequence[Electrode],
    levels: Sequence[int],
    probes_um: Sequence[Sequence[float]] | None = None,
    role: str = ElectrodeRole.RF,
) -> pl.DataFrame:
    """Boundary error and probe-potential change across refinement levels.

    Args:
        g: Trap geometry, or a bare electrode list (no role checks)
        levels: At least two refinement levels, ascending
        probes_um: Probe points (um); default three points on the axis above the tubes
        role: Basis function probed

    Returns:
        DataFrame with level, n_panels, bc_error, probe_change (max |dphi| in V
        per V against the previous level; null for the first level)
    """
    if len(levels) < 2:
        raise ValueError(f"convergence_study needs at least 2 levels, got {len(levels)}")
    electrodes = g.electrodes if isinstance(g, TrapGeometry) else tuple(g)
    if isinstance(g, TrapGeometry):
        violations = validate_geometry(g)
        if violations:
            raise GeometryError(violations)
    probes = (np.asarray(probes_um, dtype=float) * MICRON if probes_um is not None
              else _laplace_probes(electrodes)[::2])

    rows = []
    previous = None
    for level in levels:
        basis = solve_electrodes(electrodes, level, geometry=g if isinstance(g, TrapGeometry) else None)
        phi = basis.unit_potential(str(role), probes)
        change = None if previous is None else float(np.max(np.abs(phi - previous)))
        rows.append({
            "level": int(level),
            "n_panels": basis.diagnostics.n_panels,
            "bc_error": basis.diagnostics.bc_error,
            "probe_change": change,
        })
        previous = phi
    return pl.DataFrame(rows, schema={"level": pl.Int64, "n_panels": pl.Int64,
                                      "bc_error": pl.Float64, "probe_change": pl.Float64})


class PolynomialBasis(PotentialBasis):
    """Analytic quadratic potentials phi = c + g.(x - x0) + (x - x0).H.(x - x0) / 2.

    Args:
        terms: role -> (constant V, gradient V/m (3,), Hessian V/m^2 (3, 3))
        origin: Expansion point x0 (m)
        axisymmetric: Roles that are symmetric about the z axis
    """

    def __init__(self, terms: Mapping[str, tuple], origin=(0.0, 0.0, 0.0), axisymmetric: Iterable[str] = ()):
        self._terms = {}
        for role, (c, grad, hess) in terms.items():
            hess = np.asarray(hess, dtype=float)
            self._terms[str(role)] = (float(c), np.asarray(grad, dtype=float), 0.5 * (hess + hess.T))
        self.origin = np.asarray(origin, dtype=float)
        self._axisymmetric = frozenset(map(str, axisymmetric))

    @property
    def roles(self) -> tuple[str, ...]:
        return tuple(self._terms)

    @property
    def axisymmetric_roles(self) -> frozenset:
        return self._axisymmetric

    def unit_potential(self, role: str, points: np.ndarray) -> np.ndarray:
        c, g, h = self._terms[str(role)]
        d = np.atleast_2d(points) - self.origin
        return c + d @ g + 0.5 * np.einsum("ni,ij,nj->n", d, h, d)

    def unit_field(self, role: str, points: np.ndarray) -> np.ndarray:
        _, g, h = self._terms[str(role)]
        d = np.atleast_2d(points) - self.origin
        return -(g[None, :] + d @ h.T)

    def unit_hessian(self, role: str, points: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self._terms[str(role)][2], (len(np.atleast_2d(points)), 3, 3)).copy()


STRAY_ROLES = ("stray_x", "stray_y", "stray_z")


def stray_field_basis() -> PolynomialBasis:
    """Uniform stray field: roles stray_x/y/z weighted in V/m."""
    return PolynomialBasis({role: (0.0, -np.eye(3)[i], np.zeros((3, 3))) for i, role in enumerate(STRAY_ROLES)})


class CombinedBasis(PotentialBasis):
    """Superposition of several bases with disjoint roles."""

    def __init__(self, *bases: PotentialBasis):
        flat: list[PotentialBasis] = []
        for b in bases:
            flat.extend(b.parts())
        seen: set[str] = set()
        for b in flat:
            dup = seen.intersection(b.roles)
            if dup:
                raise ValueError(f"Roles {sorted(dup)} appear in more than one basis")
            seen.update(b.roles)
        self._parts = flat
        self.reference_role = next((b.reference_role for b in flat if b.reference_role), None)
        self.geometry = next((b.geometry for b in flat if b.geometry is not None), None)

    def parts(self) -> list[PotentialBasis]:
        return list(self._parts)

    @property
    def roles(self) -> tuple[str, ...]:
        return tuple(r for b in self._parts for r in b.roles)

    @property
    def axisymmetric_roles(self) -> frozenset:
        return frozenset().union(*(b.axisymmetric_roles for b in self._parts))

    def _owner(self, role: str) -> PotentialBasis:
        for b in self._parts:
            if b.owns(role):
                return b
        raise KeyError(role)

    def unit_potential(self, role: str, points: np.ndarray) -> np.ndarray:
        return self._owner(role).unit_potential(role, points)

    def unit_field(self, role: str, points: np.ndarray) -> np.ndarray:
        return self._owner(role).unit_field(role, points)

    def unit_hessian(self, role: str, points: np.ndarray) -> np.ndarray:
        return self._owner(role).unit_hessian(role, points)

    def superpose(self, voltages: Mapping[str, float], points: np.ndarray, order: int = 2):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(points)
        phi = np.zeros(n)
        fld = np.zeros((n, 3)) if order >= 1 else None
        hess = np.zeros((n, 3, 3)) if order >= 2 else None
        for b in self._parts:
            mine = {k: v for k, v in voltages.items() if b.owns(str(k))}
            p, f, h = b.superpose(mine, points, order)
            phi += p
            if order >= 1:
                fld += f
            if order >= 2:
                hess += h
        return phi, fld, hess

    def contains(self, points: np.ndarray) -> np.ndarray:
        out = np.zeros(len(np.atleast_2d(points)), dtype=bool)
        for b in self._parts:
            out |= b.contains(points)
        return out


def tabulate_axisymmetric(basis: PotentialBasis, voltages: Mapping[str, float], rho: np.ndarray, z: np.ndarray):
    """(phi, E_rho, E_z) on the (rho, z) grid of an axisymmetric voltage set.

    Returns three arrays of shape (len(rho), len(z)). Points inside conductors
    are evaluated anyway; mask them with ``basis.contains``.
    """
    rr, zz = np.meshgrid(rho, z, indexing="ij")
    pts = np.column_stack([rr.ravel(), np.zeros(rr.size), zz.ravel()])
    phi, fld, _ = basis.superpose(voltages, pts, order=1)
    shape = rr.shape
    return phi.reshape(shape), fld[:, 0].reshape(shape), fld[:, 2].reshape(shape)


def export_grid(basis: PotentialBasis, voltages: Mapping[str, float], points) -> pl.DataFrame:
    """Sampled potential and field at vacuum points, as a frame for CSV export.

    Points inside conductors are dropped.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    points = points[~basis.contains(points)]
    basis.check_voltages(voltages)
    phi, fld, _ = basis.superpose(voltages, points, order=1)
    return pl.DataFrame({
        "x_um": points[:, 0] / MICRON,
        "y_um": points[:, 1] / MICRON,
        "z_um": points[:, 2] / MICRON,
        "phi_V": phi,
        "Ex_V_per_m": fld[:, 0],
        "Ey_V_per_m": fld[:, 1],
        "Ez_V_per_m": fld[:, 2],
    })
