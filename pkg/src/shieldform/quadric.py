"""Quadric shield surfaces in normal form and their geometric quantities.

A surface is the zero set of ``(p - center)^T diag(coeffs) (p - center) + const``
restricted to a band of local heights ``z_min <= z <= z_max``.  All supported
shapes (Table-style semi-ellipsoid / semi-sphere / cylinder / cone) are
connected and axis-aligned; ``const`` is -1 in normal form.

Heights handed to the sectional functions are *local*, i.e. measured from the
surface center, so a shifted shield keeps the same ring geometry.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import ellipe


class SurfaceKind(enum.Enum):
    SEMI_ELLIPSOID = "semi_ellipsoid"
    SEMI_SPHERE = "semi_sphere"
    CYLINDER = "cylinder"
    CONE = "cone"


@dataclass(frozen=True)
class QuadricSurface:
    """Axis-aligned quadric in normal form, truncated to a height band."""

    kind: SurfaceKind
    coeffs: tuple[float, float, float]
    z_min: float
    z_max: float
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    const: float = -1.0

    def __post_init__(self):
        q1, q2, q3 = self.coeffs
        if self.const != -1.0:
            raise ValueError("normal form requires const = -1")
        if not self.z_min < self.z_max:
            raise ValueError("z_min must be below z_max")
        if self.kind is SurfaceKind.CONE:
            if not (q1 > 0 and q2 > 0 and q3 < 0):
                raise ValueError("cone requires positive radial coeffs and q3 < 0")
        else:
            if min(q1, q2, q3) < 0:
                raise ValueError(f"{self.kind.value} requires nonnegative coeffs")
        if self.kind in (SurfaceKind.SEMI_SPHERE, SurfaceKind.SEMI_ELLIPSOID):
            apex = 1.0 / math.sqrt(q3)
            if abs(self.z_max - apex) > 1e-9 * apex:
                raise ValueError("z_max must sit at the surface apex")

    # -- derived scalars ------------------------------------------------

    @property
    def coeff_matrix(self) -> np.ndarray:
        return np.diag(self.coeffs)

    @property
    def height(self) -> float:
        """Top of the usable band (local coordinates)."""
        return self.z_max

    @property
    def semi_axes(self) -> tuple[float, float]:
        """In-plane semi-axes of the z=0 section of the untruncated quadric."""
        return 1.0 / math.sqrt(self.coeffs[0]), 1.0 / math.sqrt(self.coeffs[1])


def semi_sphere(radius: float, center=(0.0, 0.0, 0.0)) -> QuadricSurface:
    q = 1.0 / radius**2
    return QuadricSurface(SurfaceKind.SEMI_SPHERE, (q, q, q), 0.0, radius, tuple(center))


def semi_ellipsoid(a: float, b: float, c: float, center=(0.0, 0.0, 0.0)) -> QuadricSurface:
    return QuadricSurface(
        SurfaceKind.SEMI_ELLIPSOID, (1.0 / a**2, 1.0 / b**2, 1.0 / c**2), 0.0, c, tuple(center)
    )


def cylinder(radius: float, height: float, center=(0.0, 0.0, 0.0)) -> QuadricSurface:
    q = 1.0 / radius**2
    return QuadricSurface(SurfaceKind.CYLINDER, (q, q, 0.0), 0.0, height, tuple(center))


def cone(base_radius: float, height: float, center=(0.0, 0.0, 0.0)) -> QuadricSurface:
    """Flared cone of the normal-form family: radius grows as sqrt(1 + z^2/c^2)."""
    q = 1.0 / base_radius**2
    return QuadricSurface(SurfaceKind.CONE, (q, q, -1.0 / height**2), 0.0, height, tuple(center))


# -- pointwise quantities ----------------------------------------------


def surface_residual(s: QuadricSurface, p) -> np.ndarray | float:
    """Signed residual of the quadric form; zero iff p lies on the surface."""
    p = np.asarray(p, dtype=float)
    q = p - np.asarray(s.center)
    r = (q * q * np.asarray(s.coeffs)).sum(axis=-1) + s.const
    return float(r) if r.ndim == 0 else r


def surface_gradient(s: QuadricSurface, p) -> np.ndarray:
    """Gradient of the residual with respect to the point: 2 diag(coeffs) (p - center)."""
    p = np.asarray(p, dtype=float)
    return 2.0 * np.asarray(s.coeffs) * (p - np.asarray(s.center))


# -- sections ----------------------------------------------------------


def _check_band(s: QuadricSurface, h: float):
    tol = 1e-12 * max(1.0, abs(s.z_max))
    if not (s.z_min - tol <= h <= s.z_max + tol):
        raise ValueError(f"height {h} outside [{s.z_min}, {s.z_max}]")


def section_semi_axes(s: QuadricSurface, h: float) -> tuple[float, float]:
    """Semi-axes of the section ellipse at local height h."""
    _check_band(s, h)
    a, b = s.semi_axes
    q3 = s.coeffs[2]
    scale_sq = max(0.0, 1.0 - q3 * h * h)
    scale = math.sqrt(scale_sq)
    return a * scale, b * scale


def ellipse_perimeter(alpha: float, beta: float) -> float:
    """Ramanujan's second approximation; exact-enough for mild aspect ratios."""
    if alpha < 0 or beta < 0:
        raise ValueError("semi-axes must be nonnegative")
    if alpha + beta == 0.0:
        return 0.0
    lam = (alpha - beta) / (alpha + beta)
    h = lam * lam
    return math.pi * (alpha + beta) * (1.0 + 3.0 * h / (10.0 + math.sqrt(4.0 - 3.0 * h)))


def section_perimeter(s: QuadricSurface, h: float) -> float:
    """Perimeter of the section curve at local height h."""
    alpha, beta = section_semi_axes(s, h)
    if abs(alpha - beta) <= 1e-12 * max(alpha, beta, 1e-300):
        return 2.0 * math.pi * alpha
    return ellipse_perimeter(alpha, beta)


# -- areas -------------------------------------------------------------


def _ellipsoid_band_integrand(phi: float, a: float, b: float, c: float) -> float:
    # Lateral-area density in the polar parametrization z = c cos(phi); the
    # azimuthal integral reduces to a complete elliptic integral.
    s2 = math.sin(phi) ** 2
    c2 = math.cos(phi) ** 2
    A = b * b * c * c * s2
    B = a * a * c * c * s2
    C = a * a * b * b * c2
    m = (A - B) / (A + C)
    return math.sin(phi) * 4.0 * math.sqrt(A + C) * ellipe(m)


def area_above(s: QuadricSurface, h: float) -> float:
    """Lateral area of the truncated surface above the plane z = h (local)."""
    _check_band(s, h)
    a, b = s.semi_axes
    if s.kind is SurfaceKind.SEMI_SPHERE:
        return 2.0 * math.pi * a * (s.z_max - h)
    if s.kind is SurfaceKind.CYLINDER:
        return 2.0 * math.pi * a * (s.z_max - h)
    if s.kind is SurfaceKind.CONE:
        c = 1.0 / math.sqrt(-s.coeffs[2])
        k = math.sqrt(a * a + c * c) / (c * c)

        def F(z):
            return 0.5 * z * math.sqrt(1.0 + (k * z) ** 2) + math.asinh(k * z) / (2.0 * k)

        return 2.0 * math.pi * a * (F(s.z_max) - F(h))
    # semi-ellipsoid: adaptive quadrature of the reduced 1-D integrand
    c = 1.0 / math.sqrt(s.coeffs[2])
    phi_h = math.acos(min(1.0, max(-1.0, h / c)))
    if phi_h == 0.0:
        return 0.0
    val, _ = quad(_ellipsoid_band_integrand, 0.0, phi_h, args=(a, b, c), epsabs=0.0, epsrel=1e-9, limit=200)
    return val


def total_area(s: QuadricSurface) -> float:
    """Lateral area of the whole truncated shield."""
    return area_above(s, s.z_min)


def boundary_length(s: QuadricSurface) -> float:
    """Perimeter of the lowest boundary curve (section at z_min)."""
    return section_perimeter(s, s.z_min)


# -- helpers for construction and tests --------------------------------


def section_point(s: QuadricSurface, h: float, theta: float) -> np.ndarray:
    """World point on the section curve at local height h and parameter angle theta."""
    alpha, beta = section_semi_axes(s, h)
    local = np.array([alpha * math.cos(theta), beta * math.sin(theta), h])
    return local + np.asarray(s.center)


def sample_points(s: QuadricSurface, n: int, rng: np.random.Generator) -> np.ndarray:
    """Random on-surface points, for verification purposes."""
    hs = rng.uniform(s.z_min, s.z_max, size=n)
    ths = rng.uniform(0.0, 2.0 * math.pi, size=n)
    return np.array([section_point(s, h, th) for h, th in zip(hs, ths)])
