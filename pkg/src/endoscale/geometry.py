"""Pinhole projection, Plücker lines and the cylinder quadric.

Conventions used throughout the package:

* Camera frame: x right, y down, z forward, millimeters.
* Integer pixel coordinates address pixel centers, so the ray of pixel
  ``(u, v)`` is ``K^-1 (u, v, 1)``.
* A line with unit direction ``s`` through a point ``p`` has moment
  ``m = s x p``. ``(s, m)`` and ``(-s, -m)`` describe the same line; axes are
  canonicalized so that the first nonzero component of ``s`` is positive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateView,
    InvalidPixel,
    LineInPlane,
    NonPositiveDepth,
    PointAtInfinity,
)

UNIT_TOL = 1e-12
GEOM_TOL = 1e-9


class Pixel(NamedTuple):
    u: float
    v: float


class Point3(NamedTuple):
    x: float
    y: float
    z: float


def skew(v):
    """Cross-product matrix ``[v]x`` so that ``skew(a) @ b == cross(a, b)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def identity(cls, width=1_000_000, height=1_000_000):
        """Unit focal length, principal point at the origin (for algebra tests).

        The image-bound invariant does not hold for this camera, so it bypasses
        validation.
        """
        obj = object.__new__(cls)
        for name, val in (("fx", 1.0), ("fy", 1.0), ("cx", 0.0), ("cy", 0.0),
                          ("width", width), ("height", height)):
            object.__setattr__(obj, name, val)
        return obj

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def K_inv(self):
        return np.array([
            [1.0 / self.fx, 0.0, -self.cx / self.fx],
            [0.0, 1.0 / self.fy, -self.cy / self.fy],
            [0.0, 0.0, 1.0],
        ])

    def scaled(self, sx, sy=None, width=None, height=None):
        """Intrinsics after resizing the image by ``(sx, sy)``.

        Uses the pixel-center convention of :func:`endoscale.maps.resize_bilinear`:
        ``u' = (u + 0.5) * sx - 0.5``.
        """
        sy = sx if sy is None else sy
        return CameraIntrinsics(
            fx=self.fx * sx,
            fy=self.fy * sy,
            cx=(self.cx + 0.5) * sx - 0.5,
            cy=(self.cy + 0.5) * sy - 0.5,
            width=int(round(self.width * sx)) if width is None else width,
            height=int(round(self.height * sy)) if height is None else height,
        )

    def ray(self, px):
        """Unnormalized ray direction with z = 1."""
        return np.array([(px[0] - self.cx) / self.fx, (px[1] - self.cy) / self.fy, 1.0])

    def to_dict(self):
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}


@dataclass(frozen=True)
class ImageLine:
    """Homogeneous image line ``a*u + b*v + c = 0`` with ``a^2 + b^2 = 1``."""

    a: float
    b: float
    c: float

    @classmethod
    def from_vector(cls, l):
        a, b, c = (float(x) for x in l)
        n = math.hypot(a, b)
        if not n > 0 or not math.isfinite(n):
            raise DegenerateView("line at infinity has no image direction")
        return cls(a / n, b / n, c / n)

    @classmethod
    def through(cls, p, q):
        return cls.from_vector(np.cross([p[0], p[1], 1.0], [q[0], q[1], 1.0]))

    @property
    def vec(self):
        return np.array([self.a, self.b, self.c])

    @property
    def direction(self):
        return np.array([-self.b, self.a])

    def signed_distance(self, u, v):
        """Signed pixel distance; works elementwise on arrays."""
        return self.a * u + self.b * v + self.c

    def flipped(self):
        return ImageLine(-self.a, -self.b, -self.c)

    def oriented_towards(self, px):
        """Return the copy of this line that has ``px`` on its positive side."""
        return self if self.signed_distance(px[0], px[1]) >= 0 else self.flipped()

    def foot(self, u=0.0, v=0.0):
        """Orthogonal projection of a pixel onto the line."""
        d = self.signed_distance(u, v)
        return Pixel(u - d * self.a, v - d * self.b)


def line_distance(l1, l2):
    """Sign-invariant distance between two unit-normalized lines."""
    a, b = l1.vec, l2.vec
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


@dataclass(frozen=True, eq=False)
class CylinderAxis:
    """Cylinder of radius ``r_s`` around the Plücker line ``(s, m)``."""

    s: np.ndarray
    m: np.ndarray
    r_s: float

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float).copy()
        m = np.asarray(self.m, dtype=float).copy()
        if abs(np.linalg.norm(s) - 1.0) > UNIT_TOL:
            raise ValueError("axis direction must be a unit vector")
        if abs(s @ m) > GEOM_TOL * max(1.0, np.linalg.norm(m)):
            raise ValueError("Plücker constraint s.m = 0 violated")
        if not self.r_s > 0:
            raise ValueError("radius must be positive")
        nz = s[np.flatnonzero(s)[0]]
        if nz < 0:
            s, m = -s, -m
        s.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "r_s", float(self.r_s))

    @classmethod
    def from_point_direction(cls, point, direction, r_s):
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        p = np.asarray(point, dtype=float)
        return cls(d, np.cross(d, p), r_s)

    @property
    def closest_point(self):
        """Axis point nearest the camera center."""
        return np.cross(self.m, self.s)

    @property
    def alpha(self):
        mm = float(self.m @ self.m)
        r2 = self.r_s ** 2
        if mm <= r2:
            raise DegenerateView("camera center lies inside the shaft (|m| <= r_s)")
        return self.r_s / math.sqrt(mm - r2)

    def distance_to(self, p):
        """Distance from point(s) ``p`` (..., 3) to the axis line."""
        p = np.asarray(p, dtype=float)
        return np.linalg.norm(np.cross(p, self.s) + self.m, axis=-1)

    def same_line(self, other, tol=GEOM_TOL):
        return (np.linalg.norm(self.s - other.s) < tol
                and np.linalg.norm(self.m - other.m) < tol * max(1.0, np.linalg.norm(self.m)))


def project_point(K, p):
    x, y, z = (float(c) for c in p)
    if not z > 0:
        raise NonPositiveDepth(f"point has z = {z}")
    return Pixel(K.fx * x / z + K.cx, K.fy * y / z + K.cy)


def quadric_residual(axis, p):
    """Cylinder surface function: squared distance to the axis minus ``r_s^2``.

    Evaluated in the expanded quadric form; zero on the surface, negative inside.
    """
    p = np.asarray(p, dtype=float)
    s, m = axis.s, axis.m
    pxs = np.cross(p, s)
    return (np.sum(pxs * pxs, axis=-1) + 2.0 * (p @ np.cross(s, m))
            + float(m @ m) - axis.r_s ** 2)


def quadric_matrix(axis):
    """4x4 symmetric matrix ``Q`` with ``x~^T Q x~ == quadric_residual``."""
    S = skew(axis.s)
    Q = np.empty((4, 4))
    Q[:3, :3] = S @ S.T
    Q[:3, 3] = S @ axis.m
    Q[3, :3] = Q[:3, 3]
    Q[3, 3] = axis.m @ axis.m - axis.r_s ** 2
    return Q


def silhouette_lines(axis, K):
    """Image lines tangent to the shaft's apparent contour, ``(l_minus, l_plus)``.

    Both lines are oriented so that the projected axis lies on their positive
    side.
    """
    if float(axis.m @ axis.m) == 0.0:
        raise DegenerateView("axis passes through the camera center")
    alpha = axis.alpha
    S = skew(axis.s)
    KiT = K.K_inv.T
    inner = _axis_pixel(axis, K)
    lines = []
    for sign in (-1.0, 1.0):
        l = ImageLine.from_vector(KiT @ ((np.eye(3) + sign * alpha * S) @ axis.m))
        lines.append(l.oriented_towards(inner) if inner is not None else l)
    return lines[0], lines[1]


def _axis_pixel(axis, K):
    """Projection of some axis point with positive depth, or None."""
    p0 = axis.closest_point
    s = axis.s
    if p0[2] > 0:
        p = p0
    elif abs(s[2]) > 0:
        t = (abs(p0[2]) + 1.0) / s[2]
        p = p0 + t * s
    else:
        return None
    return project_point(K, p)


def axis_image_line(axis, K):
    return ImageLine.from_vector(K.K_inv.T @ axis.m)


def plucker_matrix(axis):
    """4x4 antisymmetric line matrix ``[[ [m]x, -s ], [ s^T, 0 ]]``.

    ``L @ plane`` is the homogeneous intersection of the axis with ``plane``.
    """
    L = np.zeros((4, 4))
    L[:3, :3] = skew(axis.m)
    L[:3, 3] = -axis.s
    L[3, :3] = axis.s
    return L


def intersect_axis_with_plane(L, plane, tol=1e-12):
    plane = np.asarray(plane, dtype=float)
    w = L @ plane
    scale = np.abs(L).max() * np.abs(plane).max()
    if np.linalg.norm(w) <= tol * scale:
        raise LineInPlane("axis lies in the plane")
    if abs(w[3]) <= tol * scale:
        raise PointAtInfinity("axis is parallel to the plane")
    return Point3(*(w[:3] / w[3]))


def column_plane(K, u):
    """Plane through the camera center that projects to the pixel column ``u``."""
    return np.array([K.fx, 0.0, K.cx - u, 0.0])


def row_plane(K, v):
    return np.array([0.0, K.fy, K.cy - v, 0.0])


def _ray_coefficients(axis, d):
    """Quadratic ``A t^2 + B t + C`` of the quadric along rays ``t * d``."""
    dxs = np.cross(d, axis.s)
    A = np.sum(dxs * dxs, axis=-1)
    B = 2.0 * (d @ np.cross(axis.s, axis.m))
    C = float(axis.m @ axis.m) - axis.r_s ** 2
    return A, B, C


def _near_positive_root(A, B, C):
    """Smallest positive root per element, NaN where there is none."""
    A, B = np.broadcast_arrays(np.asarray(A, float), np.asarray(B, float))
    C = np.full(A.shape, C, dtype=float)
    disc = B * B - 4.0 * A * C
    ok = (disc >= 0) & (A > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    q = -0.5 * (B + np.copysign(sq, B))
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(ok, q / A, np.nan)
        t2 = np.where(ok & (q != 0), C / q, np.nan)
    t1 = np.where(t1 > 0, t1, np.nan)
    t2 = np.where(t2 > 0, t2, np.nan)
    return np.fmin(t1, t2)


def ray_cylinder_depth(axis, K, px):
    """Depth (z, mm) of the nearest surface hit along the pixel's ray, or None on a miss."""
    u, v = float(px[0]), float(px[1])
    if not (math.isfinite(u) and math.isfinite(v)):
        raise InvalidPixel(f"non-finite pixel {px!r}")
    d = K.ray((u, v))
    t = _near_positive_root(*_ray_coefficients(axis, d))
    t = float(t)
    return None if math.isnan(t) else t * d[2]


def ray_cylinder_depths(axis, K, us, vs):
    """Vectorized :func:`ray_cylinder_depth`; misses are NaN."""
    us = np.asarray(us, dtype=float)
    vs = np.asarray(vs, dtype=float)
    if not (np.all(np.isfinite(us)) and np.all(np.isfinite(vs))):
        raise InvalidPixel("non-finite pixel coordinates")
    d = np.stack([(us - K.cx) / K.fx, (vs - K.cy) / K.fy, np.ones_like(us)], axis=-1)
    return _near_positive_root(*_ray_coefficients(axis, d))
