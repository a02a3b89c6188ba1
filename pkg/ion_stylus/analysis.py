"""
Trap characterisation: rf null, secular modes, Mathieu parameters, depth,
rf-voltage inversion and the surface-proximity sweep.

Positions are metres, energies eV unless a name says otherwise. The ion
height is measured from the top face of the centre-ground electrode.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import polars as pl
from scipy import ndimage, optimize
from scipy.interpolate import RegularGridInterpolator

from ion_stylus.errors import (
    InsideConductorError,
    NoMinimumError,
    NonConvergenceError,
    UnboundedPotentialError,
)
from ion_stylus.model import CONSTANTS, MICRON, DriveConfig, ElectrodeRole, IonSpecies, Plane, TrapGeometry
from ion_stylus.pseudopotential import (
    EffectivePotential,
    energy_gradient,
    energy_hessian,
    total_energy,
)
from ion_stylus.solver import (
    DEFAULT_RESOLUTION,
    BasisSet,
    CombinedBasis,
    PotentialBasis,
    solve_basis,
    tabulate_axisymmetric,
)

logger = logging.getLogger(__name__)

TOL_GRAD = 1e-6  # eV/um
Q_WARNING = 0.3
HINT_DH_FACTOR = 1.2
HINT_OFFSET_UM = 150.0
MIN_DEPTH_MEV = 0.01
MAX_NULL_SHIFT = 0.25  # of the free-space ion height
SCAN_POINTS = 600
SCAN_RANGE_UM = 3000.0

_EV = CONSTANTS.elementary_charge


@dataclass(frozen=True)
class SecularMode:
    """One principal mode: label is axial, radial_low or radial_high."""

    label: str
    frequency_hz: float
    axis: np.ndarray


@dataclass(frozen=True)
class MathieuParameters:
    q: dict[str, float]
    a: dict[str, float]
    warnings: tuple[str, ...] = ()

    @property
    def stable(self) -> bool:
        """Inside the first stability region of the Mathieu equation on every mode axis."""
        return all(_in_first_region(self.q[k], self.a[k]) for k in self.q)


def _in_first_region(q: float, a: float) -> bool:
    # Series for the a_0 and b_1 characteristic curves bounding the region
    lower = -0.5 * q ** 2 + 7.0 / 128.0 * q ** 4
    upper = 1.0 - q - q ** 2 / 8.0 + q ** 3 / 64.0
    return lower < a < upper


@dataclass(frozen=True)
class DepthResult:
    """Barrier above the minimum along the lowest escape route."""

    depth_meV: float
    escape_point: np.ndarray  # m
    minimum_energy_eV: float
    barrier_energy_eV: float


@dataclass
class TrapReport:
    """Characterisation of one trapping configuration."""

    null_position: np.ndarray
    ion_height_um: float | None
    modes: list[SecularMode]
    mathieu: MathieuParameters
    depth: DepthResult | None
    rf_amplitude: float
    rf_frequency_hz: float
    ion_label: str = ""
    warnings: list[str] = field(default_factory=list)

    def mode(self, label: str) -> SecularMode:
        for m in self.modes:
            if m.label == label:
                return m
        raise KeyError(f"No mode '{label}'; have {[m.label for m in self.modes]}")

    @property
    def radial_mean_hz(self) -> float:
        return 0.5 * (self.mode("radial_low").frequency_hz + self.mode("radial_high").frequency_hz)

    def to_dict(self) -> dict:
        return {
            "ion": self.ion_label,
            "rf_voltage_V": self.rf_amplitude,
            "rf_frequency_MHz": self.rf_frequency_hz / 1e6,
            "null_position_um": (self.null_position / MICRON).tolist(),
            "ion_height_um": self.ion_height_um,
            "axial_MHz": self.mode("axial").frequency_hz / 1e6,
            "radial_low_MHz": self.mode("radial_low").frequency_hz / 1e6,
            "radial_high_MHz": self.mode("radial_high").frequency_hz / 1e6,
            "principal_axes": {m.label: m.axis.tolist() for m in self.modes},
            "mathieu_q": dict(self.mathieu.q),
            "mathieu_a": dict(self.mathieu.a),
            "mathieu_stable": self.mathieu.stable,
            "trap_depth_meV": None if self.depth is None else self.depth.depth_meV,
            "escape_point_um": None if self.depth is None else (self.depth.escape_point / MICRON).tolist(),
            "warnings": list(self.warnings),
        }


def _bem_part(basis: PotentialBasis) -> BasisSet | None:
    return next((b for b in basis.parts() if isinstance(b, BasisSet)), None)


def _auxiliary_planes(g: TrapGeometry | None) -> list[Plane]:
    if g is None:
        return []
    return [e.shape for e in g.electrodes if e.role == ElectrodeRole.AUXILIARY_PLANE]


def axial_null_scan(ep: EffectivePotential) -> np.ndarray | None:
    """First zero of the on-axis rf field above the centre electrode, or None."""
    g = ep.basis.geometry
    if g is None or ep.rf_role not in ep.basis.axisymmetric_roles:
        return None
    z_lo = g.cgnd_top_um + 1.0
    z_hi = z_lo + SCAN_RANGE_UM
    aux = _auxiliary_planes(g)
    if aux:
        z_hi = min(z_hi, min(p.z for p in aux) - 1.0)
    z = np.linspace(z_lo, z_hi, SCAN_POINTS) * MICRON

    def e_z(zz):
        zz = np.atleast_1d(zz)
        pts = np.column_stack([np.zeros_like(zz), np.zeros_like(zz), zz])
        return ep.basis.superpose({ep.rf_role: 1.0}, pts, order=1)[1][:, 2]

    ez = e_z(z)
    flips = np.nonzero(np.sign(ez[:-1]) * np.sign(ez[1:]) < 0)[0]
    if len(flips) == 0:
        return None
    i = flips[0]
    root = optimize.brentq(lambda zz: float(e_z(zz)[0]), z[i], z[i + 1], xtol=1e-12)
    return np.array([0.0, 0.0, root])


def default_hint(ep: EffectivePotential) -> np.ndarray:
    """Start point for the minimum search.

    Uses the on-axis rf null when the rf basis is axisymmetric, else a point
    1.2 * delta_h + 150 um above the centre electrode.

    Raises:
        ValueError: If the basis carries no geometry
    """
    hint = axial_null_scan(ep)
    if hint is not None:
        return hint
    g = ep.basis.geometry
    if g is None:
        raise ValueError("Basis has no trap geometry; pass an explicit start hint")
    return np.array([0.0, 0.0, (g.cgnd_top_um + HINT_DH_FACTOR * g.delta_h + HINT_OFFSET_UM) * MICRON])


def find_null(
    ep: EffectivePotential,
    dc_voltages: Mapping[str, float] | None = None,
    hint=None,
    tol_grad: float = TOL_GRAD,
) -> np.ndarray:
    """Minimum of the total energy (m).

    Trust-region Newton in micrometre units, with a Nelder-Mead fallback when
    the Newton iterate ends inside a conductor or fails to converge.

    Raises:
        NoMinimumError: If no point meets the gradient tolerance or the
            Hessian there is not positive definite
    """
    dc = ep.dc(dc_voltages)
    ep.basis.check_voltages(dc)
    x0 = (default_hint(ep) if hint is None else np.asarray(hint, dtype=float)) / MICRON

    def f(x):
        return total_energy(ep, dc, x * MICRON, check=False)

    def jac(x):
        return energy_gradient(ep, dc, x * MICRON) * MICRON

    def hess(x):
        return energy_hessian(ep, dc, x * MICRON) / _EV * MICRON ** 2

    def inside(x):
        return bool(ep.basis.contains(x[None, :] * MICRON)[0])

    x = None
    try:
        res = optimize.minimize(f, x0, jac=jac, hess=hess, method="trust-exact",
                                options={"gtol": tol_grad * 1e-2, "maxiter": 200})
        x = res.x
    except (ValueError, np.linalg.LinAlgError) as e:
        logger.debug("trust-exact failed: %s", e)

    if x is None or inside(x) or not np.all(np.isfinite(x)) or np.linalg.norm(jac(x)) >= tol_grad:
        logger.debug("Falling back to Nelder-Mead from %s um", np.round(x0, 3).tolist())
        scale = abs(f(x0)) + 1.0

        def penalised(x):
            return f(x) + (1e3 * scale if inside(x) else 0.0)

        res = optimize.minimize(penalised, x0, method="Nelder-Mead",
                                options={"xatol": 1e-4, "fatol": 1e-12, "maxiter": 4000, "maxfev": 8000})
        x = res.x
        # Newton polish
        for _ in range(20):
            g = jac(x)
            if np.linalg.norm(g) < tol_grad:
                break
            try:
                x = x - np.linalg.solve(hess(x), g)
            except np.linalg.LinAlgError:
                break

    grad_norm = float(np.linalg.norm(jac(x)))
    eig = np.linalg.eigvalsh(hess(x))
    if inside(x) or grad_norm >= tol_grad or not np.all(eig > 0):
        raise NoMinimumError(
            f"No trapping minimum near {np.round(x0, 2).tolist()} um: |grad| = {grad_norm:.3g} eV/um, "
            f"curvatures {np.round(eig, 12).tolist()} eV/um^2 at {np.round(x, 3).tolist()} um",
            position=x * MICRON,
            eigenvalues=eig,
        )
    return x * MICRON


def secular_frequencies(
    ep: EffectivePotential,
    dc_voltages: Mapping[str, float] | None = None,
    null=None,
) -> list[SecularMode]:
    """Secular modes at the minimum, sorted by frequency.

    The axial mode is the principal axis with the largest z component.

    Raises:
        NoMinimumError: If the energy Hessian is not positive definite
    """
    dc = ep.dc(dc_voltages)
    p = find_null(ep, dc) if null is None else np.asarray(null, dtype=float)
    eig, vec = np.linalg.eigh(energy_hessian(ep, dc, p))
    if not np.all(eig > 0):
        raise NoMinimumError(f"Saddle at {np.round(p / MICRON, 3).tolist()} um: curvatures {eig.tolist()} J/m^2",
                             position=p, eigenvalues=eig)
    axes = [v * (1.0 if v[np.argmax(np.abs(v))] > 0 else -1.0) for v in vec.T]
    freqs = np.sqrt(eig / ep.ion.mass) / (2 * math.pi)
    axial = int(np.argmax([abs(a[2]) for a in axes]))
    radial = sorted((i for i in range(3) if i != axial), key=lambda i: freqs[i])
    modes = [SecularMode("axial", float(freqs[axial]), axes[axial]),
             SecularMode("radial_low", float(freqs[radial[0]]), axes[radial[0]]),
             SecularMode("radial_high", float(freqs[radial[1]]), axes[radial[1]])]
    return sorted(modes, key=lambda m: m.frequency_hz)


def mathieu_parameters(
    ep: EffectivePotential,
    dc_voltages: Mapping[str, float] | None = None,
    null=None,
    modes: Sequence[SecularMode] | None = None,
) -> MathieuParameters:
    """q_i = 2 q U |c_i| / (m Omega^2), a_i = 4 q d_i / (m Omega^2) per mode axis.

    c_i and d_i are the curvatures of the unit rf and of the dc potential
    along each principal axis.
    """
    dc = ep.dc(dc_voltages)
    p = find_null(ep, dc) if null is None else np.asarray(null, dtype=float)
    modes = secular_frequencies(ep, dc, p) if modes is None else modes
    h_rf = ep.basis.superpose({ep.rf_role: 1.0}, p[None, :], order=2)[2][0]
    h_dc = ep.basis.superpose(dc, p[None, :], order=2)[2][0] if dc else np.zeros((3, 3))
    q_ion, m = ep.ion.charge, ep.ion.mass
    omega2 = ep.drive.rf_frequency ** 2
    q, a = {}, {}
    for mode in modes:
        c = float(mode.axis @ h_rf @ mode.axis)
        d = float(mode.axis @ h_dc @ mode.axis)
        q[mode.label] = 2.0 * q_ion * ep.drive.rf_amplitude * abs(c) / (m * omega2)
        a[mode.label] = 4.0 * q_ion * d / (m * omega2)
    warnings = []
    q_max = max(q.values())
    if q_max > Q_WARNING:
        msg = f"Mathieu q = {q_max:.3f} exceeds {Q_WARNING}; the pseudopotential approximation is marginal"
        logger.warning(msg)
        warnings.append(msg)
    return MathieuParameters(q, a, tuple(warnings))


def _graded_axis(lo: float, hi: float, centre: float, n: int, alpha: float = 2.5) -> np.ndarray:
    """n points on [lo, hi], clustered around ``centre`` by sinh grading."""
    centre = min(max(centre, lo), hi)
    s = np.linspace(-1.0, 1.0, n)
    left = centre + (centre - lo) * np.sinh(alpha * s) / math.sinh(alpha)
    right = centre + (hi - centre) * np.sinh(alpha * s) / math.sinh(alpha)
    return np.where(s < 0, left, right)


def _default_box(g: TrapGeometry, null_um: np.ndarray):
    rf = g.electrode(ElectrodeRole.RF).shape
    height = max(null_um[2] - g.cgnd_top_um, 20.0)
    half = rf.outer_radius + height + 100.0
    z_lo = min(g.rf_top_um, g.cgnd_top_um) - 200.0
    z_hi = null_um[2] + 3.0 * height + 300.0
    for plane in _auxiliary_planes(g):
        if plane.z > null_um[2]:
            z_hi = min(z_hi, plane.z)
    return (null_um[0] - half, null_um[0] + half), (null_um[1] - half, null_um[1] + half), (z_lo, z_hi)


def _grid_energy(ep: EffectivePotential, dc: Mapping[str, float], xs, ys, zs) -> np.ndarray:
    """Total energy (eV) on a 3-D grid; axisymmetric roles via (rho, z) tables."""
    xx, yy, zz = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
    axi = ep.basis.axisymmetric_roles
    dc = {str(k): v for k, v in dc.items()}
    dc_axi = {k: v for k, v in dc.items() if k in axi}
    dc_other = {k: v for k, v in dc.items() if k not in axi}

    energy = np.zeros(len(pts))
    if ep.rf_role in axi or dc_axi:
        r_max = math.hypot(max(abs(xs[0]), abs(xs[-1])), max(abs(ys[0]), abs(ys[-1])))
        rho_t = np.concatenate([[0.0], _graded_axis(0.0, r_max, 0.0, 2 * len(xs))[1:]])
        rho_t = np.unique(rho_t)
        z_t = zs
        table = np.zeros((len(rho_t), len(z_t)))
        if ep.rf_role in axi:
            _, e_rho, e_z = tabulate_axisymmetric(ep.basis, {ep.rf_role: 1.0}, rho_t, z_t)
            table += ep.kappa * (e_rho ** 2 + e_z ** 2) / _EV
        if dc_axi:
            phi, _, _ = tabulate_axisymmetric(ep.basis, dc_axi, rho_t, z_t)
            table += ep.ion.charge * phi / _EV
        table = np.nan_to_num(table, nan=0.0, posinf=0.0, neginf=0.0)
        interp = RegularGridInterpolator((rho_t, z_t), table, bounds_error=False, fill_value=None)
        energy += interp(np.column_stack([np.hypot(pts[:, 0], pts[:, 1]), pts[:, 2]]))
    if ep.rf_role not in axi:
        rf = ep.basis.superpose({ep.rf_role: 1.0}, pts, order=1)[1]
        energy += ep.kappa * np.sum(rf * rf, axis=1) / _EV
    if dc_other:
        energy += ep.ion.charge * ep.basis.superpose(dc_other, pts, order=0)[0] / _EV
    return energy.reshape(xx.shape), pts


def trap_depth(
    ep: EffectivePotential,
    dc_voltages: Mapping[str, float] | None = None,
    null=None,
    extent_um=None,
    shape: tuple[int, int, int] = (61, 61, 81),
    tol_eV: float = 1e-7,
) -> DepthResult:
    """Lowest barrier between the minimum and any sink, by grid flood-fill.

    Sinks are conductor cells, cells at or beyond an auxiliary plane above the
    minimum, and the border of the grid. The barrier level is bisected: below
    it the region connected to the minimum touches no sink.

    Args:
        extent_um: ((x0, x1), (y0, y1), (z0, z1)) grid box; default from geometry
        shape: Grid points per axis, graded towards the minimum

    Raises:
        UnboundedPotentialError: If the minimum connects to a sink at its own energy
    """
    dc = ep.dc(dc_voltages)
    p = find_null(ep, dc) if null is None else np.asarray(null, dtype=float)
    p_um = p / MICRON
    if extent_um is None:
        if ep.basis.geometry is None:
            raise ValueError("Basis has no trap geometry; pass extent_um for the depth grid")
        extent_um = _default_box(ep.basis.geometry, p_um)
    xs, ys, zs = (_graded_axis(lo, hi, c, n) * MICRON for (lo, hi), c, n in zip(extent_um, p_um, shape))
    energy, pts = _grid_energy(ep, dc, xs, ys, zs)

    sink = ep.basis.contains(pts)
    rho_um = np.hypot(pts[:, 0], pts[:, 1]) / MICRON
    for plane in _auxiliary_planes(ep.basis.geometry):
        if plane.z > p_um[2]:
            sink |= (pts[:, 2] / MICRON >= plane.z - 1e-6) & (rho_um <= plane.outer_radius)
    sink = sink.reshape(energy.shape)
    sink[0, :, :] = sink[-1, :, :] = True
    sink[:, 0, :] = sink[:, -1, :] = True
    sink[:, :, 0] = sink[:, :, -1] = True
    vacuum = ~sink

    e_min = total_energy(ep, dc, p, check=False)
    start = tuple(int(np.argmin(np.abs(ax - c))) for ax, c in zip((xs, ys, zs), p))

    def escapes(level: float):
        open_ = (energy < level) | sink
        open_[start] = True
        labels, _ = ndimage.label(open_)
        comp = labels == labels[start]
        return bool(np.any(comp & sink)), comp

    lo = e_min
    if escapes(lo)[0]:
        raise UnboundedPotentialError(
            f"Minimum at {np.round(p_um, 2).tolist()} um is not enclosed by any barrier; check the dc voltages"
        )
    hi = float(np.max(energy[vacuum])) + 1e-6 if np.any(vacuum) else lo + 1e-6
    while hi - lo > tol_eV * max(1.0, abs(hi)) and hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if escapes(mid)[0]:
            hi = mid
        else:
            lo = mid

    _, comp = escapes(hi)
    bridge = comp & vacuum & (energy >= lo)
    if not np.any(bridge):
        bridge = comp & vacuum
    cand = np.argwhere(bridge)
    coords = np.column_stack([xs[cand[:, 0]], ys[cand[:, 1]], zs[cand[:, 2]]])
    escape = coords[np.argmin(np.linalg.norm(coords - p, axis=1))]

    depth_meV = (hi - e_min) * 1e3
    if depth_meV <= 0:
        raise UnboundedPotentialError(f"Non-positive depth {depth_meV:.3g} meV at {np.round(p_um, 2).tolist()} um")
    return DepthResult(depth_meV, escape, e_min, hi)


def ion_height_um(g: TrapGeometry | None, null: np.ndarray) -> float | None:
    """Height of the ion above the centre-electrode top face (um)."""
    if g is None or not g.has_role(ElectrodeRole.CENTER_GROUND):
        return None
    return float(null[2] / MICRON - g.cgnd_top_um)


def analyze_trap(
    ep: EffectivePotential,
    dc_voltages: Mapping[str, float] | None = None,
    hint=None,
    with_depth: bool = True,
) -> TrapReport:
    """Null, modes, Mathieu parameters and depth in one report."""
    dc = ep.dc(dc_voltages)
    null = find_null(ep, dc, hint)
    modes = secular_frequencies(ep, dc, null)
    mathieu = mathieu_parameters(ep, dc, null, modes)
    depth = trap_depth(ep, dc, null) if with_depth else None
    report = TrapReport(
        null_position=null,
        ion_height_um=ion_height_um(ep.basis.geometry, null),
        modes=modes,
        mathieu=mathieu,
        depth=depth,
        rf_amplitude=ep.drive.rf_amplitude,
        rf_frequency_hz=ep.drive.rf_frequency_hz,
        ion_label=ep.ion.label,
        warnings=list(mathieu.warnings),
    )
    logger.info("Null at %s um, modes %s MHz", np.round(null / MICRON, 2).tolist(),
                [round(m.frequency_hz / 1e6, 4) for m in modes])
    return report


def _mode_frequency(modes: Sequence[SecularMode], axis: str) -> float:
    if axis == "radial":
        return 0.5 * sum(m.frequency_hz for m in modes if m.label.startswith("radial"))
    for m in modes:
        if m.label == axis:
            return m.frequency_hz
    raise ValueError(f"Unknown axis '{axis}'; expected axial, radial, radial_low or radial_high")


def infer_rf_voltage(
    basis: PotentialBasis | TrapGeometry,
    rf_frequency: float,
    ion: IonSpecies,
    target_frequency_hz: float,
    axis: str = "radial",
    dc_voltages: Mapping[str, float] | None = None,
    resolution: int = DEFAULT_RESOLUTION,
    rtol: float = 1e-4,
) -> float:
    """rf amplitude U (V) giving ``target_frequency_hz`` on ``axis``.

    Args:
        basis: Solved basis, or a geometry to solve at ``resolution``
        rf_frequency: Omega_rf in rad/s
        axis: axial, radial (mean of both radial modes), radial_low or radial_high

    Raises:
        NonConvergenceError: If the root find misses the target by more than rtol
    """
    if not target_frequency_hz > 0:
        raise ValueError(f"Target frequency must be > 0 Hz, got {target_frequency_hz}")
    if isinstance(basis, TrapGeometry):
        basis = solve_basis(basis, resolution)
    dc = dict(dc_voltages or {})
    u_ref = 100.0
    ep = EffectivePotential(basis, DriveConfig(u_ref, rf_frequency, dc), ion)
    null = find_null(ep)

    def freq(u: float) -> float:
        nonlocal null
        ep_u = ep.with_rf(rf_amplitude=u)
        null = find_null(ep_u, hint=null)
        return _mode_frequency(secular_frequencies(ep_u, null=null), axis)

    f_ref = _mode_frequency(secular_frequencies(ep, null=null), axis)
    u = u_ref * target_frequency_hz / f_ref
    f_u = freq(u)
    if abs(f_u - target_frequency_hz) > rtol * target_frequency_hz:
        try:
            u = optimize.brentq(lambda v: freq(v) - target_frequency_hz, 0.5 * u, 2.0 * u, rtol=rtol * 1e-2)
        except (ValueError, RuntimeError, NoMinimumError) as e:
            raise NonConvergenceError(f"rf voltage search for {target_frequency_hz:.4g} Hz failed: {e}") from e
        f_u = freq(u)
        if abs(f_u - target_frequency_hz) > rtol * target_frequency_hz:
            raise NonConvergenceError(
                f"rf voltage {u:.4g} V gives {f_u:.6g} Hz, target {target_frequency_hz:.6g} Hz"
            )
    return float(u)


def minimum_rf_for_depth(ep: EffectivePotential, target_depth_meV: float) -> float:
    """rf amplitude giving ``target_depth_meV`` in rf-only operation (depth ~ U^2)."""
    if any(v != 0 for v in ep.drive.dc_voltages.values()):
        raise ValueError("minimum_rf_for_depth assumes rf-only operation; clear the dc voltages")
    if not target_depth_meV > 0:
        raise ValueError(f"Target depth must be > 0 meV, got {target_depth_meV}")
    depth = trap_depth(ep).depth_meV
    return float(ep.drive.rf_amplitude * math.sqrt(target_depth_meV / depth))


@dataclass
class ProximitySweep:
    """Per-height results; ``d_crit_um`` is the first height where the trap is lost."""

    frame: pl.DataFrame
    ion_height_um: float | None
    d_crit_um: float | None

    @property
    def d_crit_over_h(self) -> float | None:
        if self.d_crit_um is None or not self.ion_height_um:
            return None
        return self.d_crit_um / self.ion_height_um


def _replace_bem(basis: PotentialBasis, bem: BasisSet) -> PotentialBasis:
    others = [b for b in basis.parts() if not isinstance(b, BasisSet)]
    return CombinedBasis(bem, *others) if others else bem


_PROXIMITY_SCHEMA = {
    "height_um": pl.Float64, "plane_z_um": pl.Float64, "has_minimum": pl.Boolean, "reason": pl.Utf8,
    "ion_height_um": pl.Float64, "null_shift_um": pl.Float64, "axial_MHz": pl.Float64,
    "radial_low_MHz": pl.Float64, "radial_high_MHz": pl.Float64, "q_max": pl.Float64, "depth_meV": pl.Float64,
}


def proximity_sweep(
    ep: EffectivePotential,
    dc_voltages: Mapping[str, float] | None,
    heights_um: Sequence[float],
    resolution: int | None = None,
    plane_radius_um: float = 5000.0,
    min_depth_meV: float = MIN_DEPTH_MEV,
    max_null_shift: float = MAX_NULL_SHIFT,
) -> ProximitySweep:
    """Grounded plane lowered towards the ion; trap characterised at each height.

    Heights are above the ion position without the plane, positive and
    descending. The trap counts as lost at the first height where no minimum
    is found, the depth falls below ``min_depth_meV``, the Mathieu parameters
    leave the first stability region, or the null is pulled more than
    ``max_null_shift`` x h from its free-space position. A grounded plane
    alone deepens the rf-only well, so in that case the last two decide.
    Smaller heights are not evaluated once the trap is lost.
    """
    heights = [float(h) for h in heights_um]
    if not heights or any(h <= 0 for h in heights):
        raise ValueError("Proximity heights must be positive")
    if any(b >= a for a, b in zip(heights, heights[1:])):
        raise ValueError("Proximity heights must be strictly descending")
    if not max_null_shift > 0:
        raise ValueError(f"max_null_shift must be > 0, got {max_null_shift}")
    bem = _bem_part(ep.basis)
    if bem is None or bem.geometry is None:
        raise ValueError("Proximity sweep needs a boundary-element basis with its trap geometry")
    dc = ep.dc(dc_voltages)
    level = bem.resolution if resolution is None else resolution

    null0 = find_null(ep, dc)
    h = ion_height_um(bem.geometry, null0)
    scale_um = h if h is not None and h > 0 else float(null0[2] / MICRON)
    rows = []
    lost_at = None
    for height in heights:
        plane_z = null0[2] / MICRON + height
        row = dict.fromkeys(_PROXIMITY_SCHEMA)
        row.update({"height_um": height, "plane_z_um": plane_z, "has_minimum": False})
        if lost_at is None:
            g = bem.geometry.with_auxiliary_plane(plane_z, plane_radius_um)
            ep_h = ep.with_basis(_replace_bem(ep.basis, solve_basis(g, level)))
            try:
                null = find_null(ep_h, dc)
                modes = secular_frequencies(ep_h, dc, null)
                mathieu = mathieu_parameters(ep_h, dc, null, modes)
                depth = trap_depth(ep_h, dc, null).depth_meV
            except (NoMinimumError, UnboundedPotentialError, InsideConductorError) as e:
                logger.info("Plane at %.1f um above ion: %s", height, e)
                row["reason"] = "no minimum"
            else:
                shift = float(np.linalg.norm(null - null0) / MICRON)
                row.update({m.label + "_MHz": m.frequency_hz / 1e6 for m in modes})
                row.update({"ion_height_um": ion_height_um(g, null), "null_shift_um": shift,
                            "q_max": max(mathieu.q.values()), "depth_meV": depth})
                if depth < min_depth_meV:
                    row["reason"] = "shallow"
                elif not mathieu.stable:
                    row["reason"] = "unstable"
                elif shift > max_null_shift * scale_um:
                    row["reason"] = "displaced"
                else:
                    row["has_minimum"] = True
            if not row["has_minimum"]:
                lost_at = height
        logger.info("Plane at %.1f um above ion: minimum %s (%s), depth %s meV", height, row["has_minimum"],
                    row["reason"] or "retained", row["depth_meV"])
        rows.append(row)

    return ProximitySweep(pl.DataFrame(rows, schema=_PROXIMITY_SCHEMA), h, lost_at)
