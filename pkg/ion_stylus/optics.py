"""
Optical access: accessible solid angle, parabolic-mirror collection and
cavity coupling.

Scenes are in micrometres. Directions are parametrised by mu = cos(theta)
with theta the polar angle from +z; for coaxial scenes seen from a point on
the axis every occluder blocks a mu interval, which gives the exact
cone-union fraction. Ray casting uses a counter-based Philox generator, one
independent stream per batch, so results do not depend on batch order.
"""

from __future__ import annotations

import abc
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import polars as pl
from scipy import optimize

from ion_stylus.errors import InsideConductorError
from ion_stylus.model import COMPENSATION_ROLES, ElectrodeRole, Plane, Rod, TrapGeometry, Tube

logger = logging.getLogger(__name__)

DEFAULT_RAYS = 1_000_000
BATCH_RAYS = 1 << 17
MAX_STDERR = 0.002
EPS = 1e-9

# Reference solid-angle figures ignore these
DEFAULT_EXCLUDED = frozenset(str(r) for r in COMPENSATION_ROLES) | {str(ElectrodeRole.OUTER_GROUND_PLANE)}


def _mu(r: float, dz: float) -> float:
    """cos(theta) of the direction from the viewpoint to radius r at height dz."""
    if r == 0:
        return math.copysign(1.0, dz) if dz != 0 else 0.0
    t = dz / r
    return t / math.sqrt(1.0 + t * t)


class Occluder(abc.ABC):
    role: str = ""

    @abc.abstractmethod
    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Distance to the first hit along each ray, inf for a miss."""

    def contains(self, point: np.ndarray) -> bool:
        return False

    def mu_intervals(self, viewpoint: np.ndarray) -> list[tuple[float, float]]:
        raise NotImplementedError(f"{type(self).__name__} has no closed-form cone for this viewpoint")


def _on_axis(viewpoint: np.ndarray, cx: float = 0.0, cy: float = 0.0) -> bool:
    return abs(viewpoint[0] - cx) < EPS and abs(viewpoint[1] - cy) < EPS


@dataclass(frozen=True)
class CylinderWall(Occluder):
    """Vertical cylindrical surface of radius ``radius`` between z0 and z1."""

    radius: float
    z0: float
    z1: float
    role: str = ""
    cx: float = 0.0
    cy: float = 0.0

    def intersect(self, origin, dirs):
        px, py = origin[0] - self.cx, origin[1] - self.cy
        a = dirs[:, 0] ** 2 + dirs[:, 1] ** 2
        b = 2.0 * (px * dirs[:, 0] + py * dirs[:, 1])
        c = px * px + py * py - self.radius ** 2
        disc = b * b - 4.0 * a * c
        ok = (a > 0) & (disc >= 0)
        sq = np.sqrt(np.where(ok, disc, 0.0))
        safe_a = np.where(ok, a, 1.0)
        best = np.full(len(dirs), np.inf)
        for sign in (-1.0, 1.0):
            t = (-b + sign * sq) / (2.0 * safe_a)
            z = origin[2] + t * dirs[:, 2]
            hit = ok & (t > EPS) & (z >= self.z0) & (z <= self.z1)
            best = np.where(hit & (t < best), t, best)
        return best

    def mu_intervals(self, viewpoint):
        if not (self.cx == 0 and self.cy == 0 and _on_axis(viewpoint)):
            return super().mu_intervals(viewpoint)
        a = _mu(self.radius, self.z0 - viewpoint[2])
        b = _mu(self.radius, self.z1 - viewpoint[2])
        return [(min(a, b), max(a, b))]


@dataclass(frozen=True)
class Annulus(Occluder):
    """Horizontal annulus (or disk when inner_radius is 0) at height z."""

    z: float
    inner_radius: float
    outer_radius: float
    role: str = ""
    cx: float = 0.0
    cy: float = 0.0

    def intersect(self, origin, dirs):
        dz = dirs[:, 2]
        ok = np.abs(dz) > 0
        t = np.where(ok, (self.z - origin[2]) / np.where(ok, dz, 1.0), np.inf)
        x = origin[0] + t * dirs[:, 0] - self.cx
        y = origin[1] + t * dirs[:, 1] - self.cy
        r2 = x * x + y * y
        hit = ok & (t > EPS) & (r2 >= self.inner_radius ** 2) & (r2 <= self.outer_radius ** 2)
        return np.where(hit, t, np.inf)

    def mu_intervals(self, viewpoint):
        if not (self.cx == 0 and self.cy == 0 and _on_axis(viewpoint)):
            return super().mu_intervals(viewpoint)
        dz = self.z - viewpoint[2]
        if dz == 0:
            return []
        a, b = _mu(self.inner_radius, dz), _mu(self.outer_radius, dz)
        return [(min(a, b), max(a, b))]


@dataclass(frozen=True)
class SolidTube(Occluder):
    """Tube wall of finite thickness (solid cylinder when inner_radius is 0)."""

    inner_radius: float
    outer_radius: float
    z_bottom: float
    z_top: float
    role: str = ""
    cx: float = 0.0
    cy: float = 0.0

    @property
    def surfaces(self) -> list[Occluder]:
        s = [
            CylinderWall(self.outer_radius, self.z_bottom, self.z_top, self.role, self.cx, self.cy),
            Annulus(self.z_top, self.inner_radius, self.outer_radius, self.role, self.cx, self.cy),
            Annulus(self.z_bottom, self.inner_radius, self.outer_radius, self.role, self.cx, self.cy),
        ]
        if self.inner_radius > 0:
            s.append(CylinderWall(self.inner_radius, self.z_bottom, self.z_top, self.role, self.cx, self.cy))
        return s

    def intersect(self, origin, dirs):
        return np.minimum.reduce([s.intersect(origin, dirs) for s in self.surfaces])

    def contains(self, point):
        rho = math.hypot(point[0] - self.cx, point[1] - self.cy)
        radial = (self.inner_radius == 0 or rho > self.inner_radius) and rho < self.outer_radius
        return radial and self.z_bottom < point[2] < self.z_top

    def mu_intervals(self, viewpoint):
        return [iv for s in self.surfaces for iv in s.mu_intervals(viewpoint)]


@dataclass(frozen=True)
class Paraboloid(Occluder):
    """Mirror z = rho^2 / (4 f) - f with its focus at the origin.

    Covers rho from ``hole_radius`` up to the rim at height ``z_rim``.
    """

    focal_length: float
    z_rim: float
    hole_radius: float = 0.0
    role: str = "mirror"

    def intersect(self, origin, dirs):
        f = self.focal_length
        a = (dirs[:, 0] ** 2 + dirs[:, 1] ** 2) / (4 * f)
        b = 2 * (origin[0] * dirs[:, 0] + origin[1] * dirs[:, 1]) / (4 * f) - dirs[:, 2]
        c = (origin[0] ** 2 + origin[1] ** 2) / (4 * f) - f - origin[2]
        best = np.full(len(dirs), np.inf)
        lin = np.abs(a) < 1e-15
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = b * b - 4 * a * c
            sq = np.sqrt(np.where(disc >= 0, disc, 0.0))
            roots = [np.where(lin, -c / np.where(b != 0, b, np.inf), (-b + s * sq) / (2 * np.where(lin, 1.0, a)))
                     for s in (-1.0, 1.0)]
        for t in roots:
            p = origin[None, :] + t[:, None] * dirs
            r2 = p[:, 0] ** 2 + p[:, 1] ** 2
            hit = (disc >= 0) & np.isfinite(t) & (t > EPS) & (p[:, 2] <= self.z_rim) & (r2 >= self.hole_radius ** 2)
            best = np.where(hit & (t < best), t, best)
        return best

    def mu_intervals(self, viewpoint):
        if np.linalg.norm(viewpoint) > EPS:
            return super().mu_intervals(viewpoint)
        f = self.focal_length
        rim_r = 2 * math.sqrt(f * (self.z_rim + f))
        lo = -1.0 if self.hole_radius == 0 else _mu(self.hole_radius, self.hole_radius ** 2 / (4 * f) - f)
        return [(lo, _mu(rim_r, self.z_rim))]


@dataclass(frozen=True)
class ObstructionScene:
    """Occluders seen from ``viewpoint`` (um); excluded roles are dropped."""

    occluders: tuple[Occluder, ...]
    viewpoint: np.ndarray
    excluded: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "viewpoint", np.asarray(self.viewpoint, dtype=float).reshape(3))
        kept = tuple(o for o in self.occluders if o.role not in self.excluded)
        object.__setattr__(self, "occluders", kept)
        for o in kept:
            if o.contains(self.viewpoint):
                raise InsideConductorError(
                    f"Viewpoint {self.viewpoint.tolist()} um lies inside occluder '{o.role}'"
                )

    def with_occluder(self, occluder: Occluder) -> "ObstructionScene":
        return ObstructionScene(self.occluders + (occluder,), self.viewpoint, self.excluded)

    def first_hit(self, dirs: np.ndarray) -> np.ndarray:
        """Index of the nearest occluder per ray, -1 for escaping rays."""
        if not self.occluders:
            return np.full(len(dirs), -1)
        t = np.stack([o.intersect(self.viewpoint, dirs) for o in self.occluders])
        idx = np.argmin(t, axis=0)
        return np.where(np.isfinite(t[idx, np.arange(len(dirs))]), idx, -1)


def scene_from_geometry(
    g: TrapGeometry,
    ion_height_um: float,
    exclude: Iterable[str] = DEFAULT_EXCLUDED,
    with_floors: bool = True,
) -> ObstructionScene:
    """Obstruction scene of a trap seen from the ion.

    The ion sits on the axis ``ion_height_um`` above the centre-electrode top.
    ``with_floors`` closes each tube at its lower end with a disk of its outer
    radius, standing in for the trap package below the tubes.
    """
    occ: list[Occluder] = []
    for e in g.electrodes:
        role, s = str(e.role), e.shape
        if isinstance(s, Tube):
            occ.append(SolidTube(s.inner_radius, s.outer_radius, s.z_bottom, s.z_top, role))
            if with_floors:
                occ.append(Annulus(s.z_bottom, 0.0, s.outer_radius, role))
        elif isinstance(s, Plane):
            occ.append(Annulus(s.z, s.inner_radius, s.outer_radius, role))
        elif isinstance(s, Rod):
            occ.append(SolidTube(0.0, s.radius, s.z_bottom, s.z_top, role, s.x, s.y))
    viewpoint = (0.0, 0.0, g.cgnd_top_um + ion_height_um)
    return ObstructionScene(tuple(occ), viewpoint, frozenset(map(str, exclude)))


@dataclass(frozen=True)
class SolidAngleResult:
    """Escaping fraction of 4 pi; ``stderr`` is 0 for the analytic method."""

    fraction: float
    stderr: float
    method: str
    rays: int = 0
    blocked: int = 0
    seed: int | None = None

    def to_dict(self) -> dict:
        return {"fraction": self.fraction, "stderr": self.stderr, "method": self.method,
                "rays": self.rays, "blocked": self.blocked, "seed": self.seed}


def random_directions(n: int, seed: int, batch: int = 0) -> np.ndarray:
    """n isotropic unit vectors from Philox stream ``batch`` of key ``seed``."""
    rng = np.random.Generator(np.random.Philox(key=seed).jumped(batch))
    u = rng.random((n, 2))
    mu = 2.0 * u[:, 0] - 1.0
    phi = 2.0 * math.pi * u[:, 1]
    s = np.sqrt(1.0 - mu * mu)
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), mu])


def _raycast(scene: ObstructionScene, n: int, seed: int) -> SolidAngleResult:
    if n <= 0:
        raise ValueError(f"Ray count must be positive, got {n}")
    blocked = 0
    for b, start in enumerate(range(0, n, BATCH_RAYS)):
        dirs = random_directions(min(BATCH_RAYS, n - start), seed, b)
        blocked += int(np.count_nonzero(scene.first_hit(dirs) >= 0))
    p = 1.0 - blocked / n
    stderr = math.sqrt(p * (1.0 - p) / n)
    if stderr > MAX_STDERR:
        logger.warning("Ray-cast standard error %.3g exceeds %.3g; increase the ray count", stderr, MAX_STDERR)
    return SolidAngleResult(p, stderr, "raycast", n, blocked, seed)


def _union_length(intervals: Sequence[tuple[float, float]]) -> float:
    total, end = 0.0, -math.inf
    for lo, hi in sorted(intervals):
        lo = max(lo, end)
        if hi > lo:
            total += hi - lo
            end = hi
    return total


def accessible_solid_angle(
    scene: ObstructionScene,
    method: str = "raycast",
    n: int = DEFAULT_RAYS,
    seed: int = 0,
) -> SolidAngleResult:
    """Fraction of directions from the viewpoint that hit no occluder.

    ``method`` is "raycast" (n rays, fixed seed) or "analytic" (exact
    cone union; coaxial scenes with an on-axis viewpoint only).
    """
    if method == "raycast":
        return _raycast(scene, n, seed)
    if method == "analytic":
        intervals = [iv for o in scene.occluders for iv in o.mu_intervals(scene.viewpoint)]
        return SolidAngleResult(1.0 - _union_length(intervals) / 2.0, 0.0, "analytic")
    raise ValueError(f"Unknown method {method!r}; expected 'raycast' or 'analytic'")


def hit_map(scene: ObstructionScene, n_theta: int = 90, n_phi: int = 180) -> pl.DataFrame:
    """Nearest occluder role for a regular grid of directions (bin centres)."""
    theta = (np.arange(n_theta) + 0.5) * math.pi / n_theta
    phi = (np.arange(n_phi) + 0.5) * 2 * math.pi / n_phi
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    tt, pp = tt.ravel(), pp.ravel()
    dirs = np.column_stack([np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)])
    idx = scene.first_hit(dirs)
    roles = np.array([o.role for o in scene.occluders] + [""], dtype=object)
    return pl.DataFrame({
        "theta_deg": np.degrees(tt),
        "phi_deg": np.degrees(pp),
        "blocked_by": roles[idx].tolist(),
    })


@dataclass(frozen=True)
class MirrorSpec:
    """Parabolic mirror with the ion at its focus.

    ``hole_half_angle`` is the vertex-hole half angle (rad) seen from the
    focus, measured from the -z axis.
    """

    focal_length: float
    depth_to_f: float
    hole_half_angle: float = 0.0

    def __post_init__(self):
        if not self.focal_length > 0:
            raise ValueError(f"Focal length must be > 0 m, got {self.focal_length}")
        if not self.depth_to_f > 1:
            raise ValueError(f"depth_to_f must be > 1 (focus inside the mirror), got {self.depth_to_f}")
        if not 0 <= self.hole_half_angle < math.pi / 2:
            raise ValueError(f"Hole half angle must be in [0, pi/2), got {self.hole_half_angle}")

    @property
    def depth(self) -> float:
        return self.depth_to_f * self.focal_length

    @property
    def rim_radius(self) -> float:
        return 2.0 * math.sqrt(self.focal_length * self.depth)

    @property
    def hole_radius(self) -> float:
        return 2.0 * self.focal_length * math.tan(self.hole_half_angle / 2)


def mirror_geometry(ms: MirrorSpec) -> float:
    """Rim polar angle theta_rim (rad) from +z at the focus."""
    return math.atan2(ms.rim_radius, ms.depth - ms.focal_length)


def cap_fraction(theta_rim: float, theta_hole: float = 0.0) -> float:
    """Fraction of 4 pi between theta_rim and pi - theta_hole."""
    return (1.0 + math.cos(theta_rim)) / 2.0 - (1.0 - math.cos(theta_hole)) / 2.0


def dipole_fraction(theta_rim: float, theta_hole: float = 0.0) -> float:
    """Fraction of sin^2 dipole power between theta_rim and pi - theta_hole."""
    c, ch = math.cos(theta_rim), math.cos(theta_hole)
    return 0.75 * ((c - c ** 3 / 3.0) + (ch - ch ** 3 / 3.0))


def mirror_solid_angle(ms: MirrorSpec) -> float:
    """Fraction of 4 pi intercepted by the mirror."""
    return cap_fraction(mirror_geometry(ms), ms.hole_half_angle)


def mirror_scene(ms: MirrorSpec) -> ObstructionScene:
    """The mirror as an occluder seen from its focus, in units of f."""
    return ObstructionScene((Paraboloid(1.0, ms.depth_to_f - 1.0, ms.hole_radius / ms.focal_length),),
                            np.zeros(3))


def mirror_solid_angle_raycast(ms: MirrorSpec, n: int = DEFAULT_RAYS, seed: int = 0) -> SolidAngleResult:
    """Monte Carlo intercepted fraction; ``fraction`` is the intercepted share."""
    res = accessible_solid_angle(mirror_scene(ms), "raycast", n, seed)
    return SolidAngleResult(1.0 - res.fraction, res.stderr, "raycast", res.rays, res.blocked, seed)


def hole_for_fraction(depth_to_f: float, fraction: float) -> float:
    """Vertex-hole half angle (rad) that leaves ``fraction`` of 4 pi intercepted."""
    c = math.cos(mirror_geometry(MirrorSpec(1.0, depth_to_f)))
    ch = 2.0 * fraction - c
    if not 0.0 < ch <= 1.0:
        raise ValueError(f"Fraction {fraction} not reachable with depth_to_f {depth_to_f} (max {(1 + c) / 2:.4f})")
    return math.acos(ch)


def dipole_collection_efficiency(ms: MirrorSpec) -> float:
    """Share of a linear dipole's power (dipole along the mirror axis) intercepted."""
    return dipole_fraction(mirror_geometry(ms), ms.hole_half_angle)


def cavity_coupling_efficiency(cooperativity: float) -> float:
    """eta = 2C / (2C + 1)."""
    if cooperativity < 0:
        raise ValueError(f"Cooperativity must be >= 0, got {cooperativity}")
    return 2.0 * cooperativity / (2.0 * cooperativity + 1.0)


def cooperativity_for_efficiency(eta: float) -> float:
    """Inverse of cavity_coupling_efficiency: C = eta / (2 (1 - eta))."""
    if not 0.0 <= eta < 1.0:
        raise ValueError(f"Coupling efficiency must be in [0, 1), got {eta}")
    return eta / (2.0 * (1.0 - eta))


@dataclass(frozen=True)
class CollectionPath:
    """Collected solid-angle fraction times mode-coupling efficiency."""

    solid_angle_fraction: float
    mode_coupling: float

    def __post_init__(self):
        for name in ("solid_angle_fraction", "mode_coupling"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")

    @property
    def total(self) -> float:
        return self.solid_angle_fraction * self.mode_coupling


def pair_rate_boost(old: CollectionPath | tuple, new: CollectionPath | tuple) -> float:
    """Two-photon coincidence rate ratio (eta_new / eta_old)^2."""
    old = old if isinstance(old, CollectionPath) else CollectionPath(*old)
    new = new if isinstance(new, CollectionPath) else CollectionPath(*new)
    return (new.total / old.total) ** 2


def rim_angle_for_fraction(fraction: float) -> float:
    """theta_rim of a hole-free mirror intercepting ``fraction`` of 4 pi."""
    return float(optimize.brentq(lambda t: cap_fraction(t) - fraction, 0.0, math.pi))
