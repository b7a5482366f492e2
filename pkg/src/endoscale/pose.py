"""Instrument shaft pose from image primitives (two boundary lines and a tip pixel)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .errors import (
    BoundariesNotFound,
    DegenerateLines,
    LineMissesMask,
    MaskTooSmall,
    NoInteriorTip,
    NoValidSignCombination,
    TipPlaneDegenerate,
)
from .geometry import CylinderAxis, ImageLine, Pixel, Point3

MIN_MASK_PIXELS = 200
BORDER_MARGIN = 2
INLIER_PX = 1.5
MIN_INLIER_RATIO = 0.3
TIP_PLANE_TOL = 1e-6
DISTINCT_TOL = 1e-9
MAX_PAIR_ANGLE_DEG = 60.0
N_CANDIDATES = 3


@dataclass(frozen=True)
class ShaftObservation:
    line_minus: ImageLine
    line_plus: ImageLine
    tip: Pixel
    quality: float = 1.0

    def __post_init__(self):
        if geo.line_distance(self.line_minus, self.line_plus) < DISTINCT_TOL:
            raise DegenerateLines("boundary lines are not distinct")
        if not 0.0 <= self.quality <= 1.0:
            raise ValueError("quality must lie in [0, 1]")

    def interior_hint(self):
        """A pixel between the two lines, near the tip."""
        return interior_point(self.line_minus, self.line_plus, self.tip)


@dataclass(frozen=True, eq=False)
class ToolPose:
    axis: CylinderAxis
    tip_point: Point3

    @property
    def rotation(self):
        s = self.axis.s
        ref = np.array([1.0, 0.0, 0.0]) if abs(s[0]) <= 0.9 else np.array([0.0, 1.0, 0.0])
        x = ref - (ref @ s) * s
        x /= np.linalg.norm(x)
        y = np.cross(s, x)
        return np.column_stack([x, y, s])

    @property
    def frame(self):
        """3x4 pose: rotation with the shaft direction as z column, translation at the tip."""
        return np.column_stack([self.rotation, np.asarray(self.tip_point, dtype=float)])


def lines_coincide(l1, l2, angle_deg=0.1, offset_px=2.0):
    cosang = abs(l1.a * l2.a + l1.b * l2.b)
    if cosang < math.cos(math.radians(angle_deg)):
        return False
    sign = 1.0 if l1.a * l2.a + l1.b * l2.b > 0 else -1.0
    return abs(l1.c - sign * l2.c) < offset_px


def interior_point(l1, l2, near):
    """Point midway between two lines, taken on the perpendicular through ``near``."""
    f1 = l1.foot(*near)
    f2 = l2.foot(*near)
    return Pixel(0.5 * (f1.u + f2.u), 0.5 * (f1.v + f2.v))


# ---------------------------------------------------------------- boundaries

def edge_points(bits, margin=BORDER_MARGIN):
    """Sub-pixel boundary points of a binary mask.

    One point per foreground/background pixel pair sharing an edge, placed at
    the midpoint of the two pixel centers. Points within ``margin`` pixels of
    the image border are dropped (the shaft leaves the image there).
    """
    h, w = bits.shape
    dv, du = np.nonzero(bits[:, 1:] != bits[:, :-1])
    pu = [du + 0.5]
    pv = [dv.astype(float)]
    dv, du = np.nonzero(bits[1:, :] != bits[:-1, :])
    pu.append(du.astype(float))
    pv.append(dv + 0.5)
    u = np.concatenate(pu)
    v = np.concatenate(pv)
    keep = (u >= margin) & (u <= w - 1 - margin) & (v >= margin) & (v <= h - 1 - margin)
    return np.column_stack([u[keep], v[keep]])


def fit_line_tls(pts):
    """Total-least-squares line through points (N, 2)."""
    c = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - c, full_matrices=False)
    n = vt[-1]
    return ImageLine.from_vector([n[0], n[1], -(n @ c)])


def _ransac_line(pts, rng, n_iter, thr):
    """Best two-point line hypothesis, refined by TLS on its inliers."""
    n = len(pts)
    i = rng.integers(0, n, n_iter)
    j = rng.integers(0, n, n_iter)
    ok = i != j
    p, q = pts[i[ok]], pts[j[ok]]
    d = q - p
    nrm = np.hypot(d[:, 0], d[:, 1])
    good = nrm > 1e-9
    p, d, nrm = p[good], d[good], nrm[good]
    if len(p) == 0:
        return None, np.zeros(n, bool)
    a, b = -d[:, 1] / nrm, d[:, 0] / nrm
    c = -(a * p[:, 0] + b * p[:, 1])
    dist = np.abs(np.outer(a, pts[:, 0]) + np.outer(b, pts[:, 1]) + c[:, None])
    support = (dist <= thr).sum(axis=1)
    k = int(np.argmax(support))
    inl = dist[k] <= thr
    line = ImageLine(a[k], b[k], c[k])
    for _ in range(3):
        if inl.sum() < 2:
            break
        line = fit_line_tls(pts[inl])
        new = np.abs(line.signed_distance(pts[:, 0], pts[:, 1])) <= thr
        if np.array_equal(new, inl):
            break
        inl = new
    return line, inl


def _candidate_lines(pts, rng, n_iter, thr, n_lines=N_CANDIDATES):
    """Sequential RANSAC: up to ``n_lines`` lines, each fit on points the previous ones left."""
    out = []
    rest = np.ones(len(pts), bool)
    for _ in range(n_lines):
        idx = np.flatnonzero(rest)
        if len(idx) < 2:
            break
        line, inl = _ransac_line(pts[idx], rng, n_iter, thr)
        if line is None or inl.sum() < 2:
            break
        full = np.zeros(len(pts), bool)
        full[idx[inl]] = True
        out.append((line, full))
        rest &= ~(np.abs(line.signed_distance(pts[:, 0], pts[:, 1])) <= 2 * thr)
    return out


def extract_shaft_boundaries(mask, seed=0, n_iter=300, thr=INLIER_PX):
    """Fit the two straight boundary lines of a shaft mask.

    Returns ``(line_minus, line_plus, quality)``. Both lines are oriented with
    the mask centroid on their positive side; ``quality`` is the inlier ratio of
    boundary points along the straight part of the shaft (the tip cap and the
    image border are excluded).

    A few lines are extracted by sequential RANSAC and the best-supported pair
    converging at under ``MAX_PAIR_ANGLE_DEG`` is kept: the rim of the tip cap
    can out-vote a short silhouette edge but meets the silhouettes at a steep
    angle.
    """
    if mask.count < MIN_MASK_PIXELS:
        raise MaskTooSmall(f"mask has {mask.count} foreground pixels, need {MIN_MASK_PIXELS}")
    pts = edge_points(mask.bits)
    if len(pts) < 10:
        raise BoundariesNotFound("mask has too few boundary points")
    rng = np.random.default_rng(seed)
    cands = _candidate_lines(pts, rng, n_iter, thr)
    cos_max = math.cos(math.radians(MAX_PAIR_ANGLE_DEG))
    best = None
    for i in range(len(cands)):
        for j in range(i + 1, len(cands)):
            (l1, in1), (l2, in2) = cands[i], cands[j]
            if abs(l1.a * l2.a + l1.b * l2.b) < cos_max or lines_coincide(l1, l2):
                continue
            score = int((in1 | in2).sum())
            if best is None or score > best[0]:
                best = (score, l1, l2, in1 | in2)
    if best is None:
        raise BoundariesNotFound("no pair of distinct, converging boundary lines")
    _, l1, l2, inliers = best
    if inliers.mean() < MIN_INLIER_RATIO:
        raise BoundariesNotFound(f"only {inliers.mean():.0%} of boundary points are inliers")

    centroid = mask.centroid()
    l1 = l1.oriented_towards(centroid)
    l2 = l2.oriented_towards(centroid)
    if math.atan2(l1.b, l1.a) > math.atan2(l2.b, l2.a):
        l1, l2 = l2, l1

    quality = _straight_part_quality(pts, inliers, l1, l2)
    return l1, l2, quality


def _straight_part_quality(pts, inliers, l1, l2, thr=INLIER_PX):
    """Inlier ratio of boundary points, not counting the tip cap.

    Cap points are non-inliers inside the band between the (inward oriented)
    lines and within one apparent shaft width of either end of the inlier run.
    """
    d = l1.direction + (l2.direction if l1.direction @ l2.direction >= 0 else -l2.direction)
    d /= np.linalg.norm(d)
    t = pts @ d
    ti = t[inliers]
    lo, hi = ti.min(), ti.max()

    def width_at(tt):
        p = pts[inliers][np.argmin(np.abs(ti - tt))]
        return abs(l1.signed_distance(*p)) + abs(l2.signed_distance(*p))

    d1 = l1.signed_distance(pts[:, 0], pts[:, 1])
    d2 = l2.signed_distance(pts[:, 0], pts[:, 1])
    in_band = (d1 > thr) & (d2 > thr)
    near_end = (t <= lo + width_at(lo)) | (t >= hi - width_at(hi))
    counted = inliers | ~(in_band & near_end)
    return float(inliers.sum() / counted.sum())


# ---------------------------------------------------------------------- tip

def line_run(mask, l_s):
    """Foreground pixels within half a pixel of ``l_s``, sorted along the line."""
    vs, us = np.nonzero(mask.bits)
    near = np.abs(l_s.signed_distance(us, vs)) <= 0.5 * (abs(l_s.a) + abs(l_s.b))
    if not near.any():
        raise LineMissesMask("axis line does not cross the mask")
    us, vs = us[near].astype(float), vs[near].astype(float)
    t = us * l_s.direction[0] + vs * l_s.direction[1]
    order = np.argsort(t, kind="stable")
    return us[order], vs[order], t[order]


def _touches_border(mask, u, v, margin=BORDER_MARGIN):
    return (u < margin or v < margin or u > mask.width - 1 - margin
            or v > mask.height - 1 - margin)


def shaft_ends(mask, l_s):
    """``(border_end, free_end)`` pixels of the mask run along ``l_s``."""
    us, vs, _ = line_run(mask, l_s)
    first = Pixel(us[0], vs[0])
    last = Pixel(us[-1], vs[-1])
    b_first = _touches_border(mask, *first)
    b_last = _touches_border(mask, *last)
    if b_first and b_last:
        raise NoInteriorTip("both shaft ends touch the image border")
    if b_first != b_last:
        return (first, last) if b_first else (last, first)
    # neither end touches: the free end is the one farther from the image border
    def border_dist(p):
        return min(p.u, p.v, mask.width - 1 - p.u, mask.height - 1 - p.v)
    return (first, last) if border_dist(first) < border_dist(last) else (last, first)


def extract_tip_pixel(mask, l_s):
    """Foreground pixel on ``l_s`` at the shaft end that is free of the image border."""
    return shaft_ends(mask, l_s)[1]


# --------------------------------------------------------------------- axis

def estimate_axis(l_minus, l_plus, K, r_s, interior_hint):
    """Invert the silhouette projection: two boundary lines -> cylinder axis.

    Each line back-projects to a plane through the camera center tangent to the
    shaft. The axis is parallel to both planes and at distance ``r_s`` from
    each, on the side of the plane that contains the interior hint's ray.
    """
    if not r_s > 0:
        raise ValueError("radius must be positive")
    Kt = K.K.T
    n_m = Kt @ l_minus.vec
    n_p = Kt @ l_plus.vec
    n_m /= np.linalg.norm(n_m)
    n_p /= np.linalg.norm(n_p)
    s = np.cross(n_m, n_p)
    ns = np.linalg.norm(s)
    if ns < 1e-12:
        raise DegenerateLines("boundary lines back-project to the same plane")
    s /= ns
    hint = (interior_hint[0], interior_hint[1], 1.0)
    side_m = np.sign(l_minus.vec @ hint)
    side_p = np.sign(l_plus.vec @ hint)

    if side_m == 0 or side_p == 0:
        raise NoValidSignCombination("interior hint lies on a boundary line")
    # of the four tangent configurations only the one in the hint's wedge is visible
    p = np.linalg.solve(np.vstack([s, n_m, n_p]), [0.0, side_m * r_s, side_p * r_s])
    if p[2] <= 0 and abs(s[2]) < 1e-12:
        raise NoValidSignCombination("recovered axis lies behind the camera")
    return CylinderAxis(s, np.cross(s, p), r_s)


def estimate_pose(obs, K, r_s, row_fallback=True):
    """Axis from the boundary lines, tip from the tip pixel's image column."""
    axis = estimate_axis(obs.line_minus, obs.line_plus, K, r_s, obs.interior_hint())
    L = geo.plucker_matrix(axis)
    plane = geo.column_plane(K, obs.tip.u)
    if abs(axis.s @ plane[:3]) / np.linalg.norm(plane[:3]) < TIP_PLANE_TOL:
        if not row_fallback:
            raise TipPlaneDegenerate("axis is parallel to the tip's pixel-column plane")
        plane = geo.row_plane(K, obs.tip.v)
    tip = geo.intersect_axis_with_plane(L, plane)
    return ToolPose(axis, tip)
