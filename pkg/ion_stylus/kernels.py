"""
Closed-form potential and field kernels.

Ring kernels give the potential and field of a coaxial ring of radius ``a``
at height ``zr``, per unit reduced surface charge ``sigma / (4 pi eps0)`` and
per unit generator length; integrating them along a panel gives a
boundary-element panel. Line kernels give a uniform finite line charge
along z, per unit ``lambda / (4 pi eps0)``.

All arguments broadcast. Lengths in metres.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ellipe, ellipkm1

# Below this radius a point counts as on the axis
RHO_EPS = 1e-12


def _ring_terms(a, zr, r, z):
    dz = z - zr
    big = (r + a) ** 2 + dz ** 2
    small = (r - a) ** 2 + dz ** 2
    # 1 - m, exact form keeps precision next to the ring
    p = small / big
    k = ellipkm1(p)
    e = ellipe(1.0 - p)
    return dz, big, small, k, e


def ring_potential(a, zr, r, z):
    """Potential of a ring: 4 a K(m) / sqrt((r+a)^2 + dz^2)."""
    _, big, _, k, _ = _ring_terms(a, zr, r, z)
    return 4.0 * a * k / np.sqrt(big)


def ring_field(a, zr, r, z):
    """Field (E_r, E_z) of a ring."""
    dz, big, small, k, e = _ring_terms(a, zr, r, z)
    sq = np.sqrt(big)
    e_z = 4.0 * a * dz * e / (small * sq)
    r_safe = np.where(r > RHO_EPS, r, 1.0)
    e_r = 2.0 * a / (r_safe * sq) * (k + (r * r - a * a - dz * dz) * e / small)
    e_r = np.where(r > RHO_EPS, e_r, 0.0)
    return e_r, e_z


def line_potential(z1, z2, rho, z):
    """Potential of a uniform line charge on the z axis from z1 to z2."""
    rho = np.maximum(rho, RHO_EPS)
    return np.arcsinh((z2 - z) / rho) - np.arcsinh((z1 - z) / rho)


def line_field(z1, z2, rho, z):
    """Field (E_rho, E_z) of a uniform line charge from z1 to z2."""
    r1 = np.sqrt(rho ** 2 + (z1 - z) ** 2)
    r2 = np.sqrt(rho ** 2 + (z2 - z) ** 2)
    rho_safe = np.maximum(rho, RHO_EPS)
    e_rho = ((z2 - z) / r2 - (z1 - z) / r1) / rho_safe
    e_z = 1.0 / r2 - 1.0 / r1
    return e_rho, e_z


def cylindrical_to_cartesian(points):
    """Split (n, 3) Cartesian points into rho, z and the radial unit vector."""
    points = np.atleast_2d(points)
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    rho = np.hypot(x, y)
    safe = np.where(rho > RHO_EPS, rho, 1.0)
    ux = np.where(rho > RHO_EPS, x / safe, 0.0)
    uy = np.where(rho > RHO_EPS, y / safe, 0.0)
    return rho, z, ux, uy


def fd_hessian(field_fn, points, step):
    """Hessian of the potential from 5-point central differences of the field.

    Args:
        field_fn: Maps (n, 3) points to (n, 3) fields E = -grad(phi)
        points: (n, 3) evaluation points
        step: Difference step in metres

    Returns:
        (n, 3, 3) symmetric Hessians of phi
    """
    points = np.atleast_2d(points)
    n = len(points)
    offsets = []
    for axis in range(3):
        for k in (2, 1, -1, -2):
            d = np.zeros(3)
            d[axis] = k * step
            offsets.append(d)
    shifted = (points[:, None, :] + np.asarray(offsets)[None, :, :]).reshape(-1, 3)
    fields = field_fn(shifted).reshape(n, 3, 4, 3)
    # d/dx_axis of E_j, stencil (-f(+2h) + 8 f(+h) - 8 f(-h) + f(-2h)) / 12h
    deriv = (-fields[:, :, 0] + 8 * fields[:, :, 1] - 8 * fields[:, :, 2] + fields[:, :, 3]) / (12 * step)
    hess = -deriv
    return 0.5 * (hess + np.transpose(hess, (0, 2, 1)))
