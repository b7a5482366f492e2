"""Metric scale recovery of a relative depth map from the instrument shaft."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .errors import (
    DataError,
    DegenerateDesign,
    DimensionMismatch,
    FrameRejected,
    InsufficientSamples,
    NoInteriorTip,
    NumericalFailure,
    UnitMismatch,
    ZeroEta,
)
from .geometry import Pixel
from .maps import DepthMap, Unit
from .pose import (
    ShaftObservation,
    line_run,
    estimate_axis,
    estimate_pose,
    extract_shaft_boundaries,
    extract_tip_pixel,
    shaft_ends,
)

ETA_TOL = 1e-12


@dataclass(frozen=True)
class ScaleParams:
    """Affine map ``relative = eta * metric + gamma``."""

    eta: float
    gamma: float
    n_samples: int = 2
    residual_rms: float = 0.0

    def __post_init__(self):
        if not abs(self.eta) > ETA_TOL:
            raise ZeroEta(f"eta = {self.eta}")


@dataclass(frozen=True)
class RecoveryConfig:
    stride: float = 5.0
    min_samples: int = 10
    min_quality: float = 0.6
    ransac_seed: int = 0
    row_fallback: bool = True


@dataclass(frozen=True, eq=False)
class AxisSampleSet:
    """Paired samples along the axis line: pixels, metric surface depths, relative depths."""

    pixels: tuple
    metric_depths: np.ndarray
    relative_depths: np.ndarray

    def __post_init__(self):
        n = len(self.pixels)
        if len(self.metric_depths) != n or len(self.relative_depths) != n:
            raise DimensionMismatch("sample lists differ in length")
        if not np.all(np.asarray(self.metric_depths) > 0):
            raise InsufficientSamples("metric sample depths must be positive")
        if len(set(self.pixels)) != n:
            raise DimensionMismatch("sample pixels are not distinct")

    def fit(self):
        return fit_scale(self.metric_depths, self.relative_depths)


def sample_axis_pixels(mask, l_s, stride=5.0):
    """Pixel centers along ``l_s`` whose 4-neighbourhood lies inside the mask.

    Samples are spaced ``stride`` pixels along the line, snapped to the
    nearest pixel and ordered from the border end towards the tip (for a
    mask spanning the image, in the line's own direction).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    try:
        border_end, free_end = shaft_ends(mask, l_s)
    except NoInteriorTip:
        # border to border: no tip, keep the along-line order
        us, vs, _ = line_run(mask, l_s)
        border_end, free_end = Pixel(us[0], vs[0]), Pixel(us[-1], vs[-1])
    start = np.array(l_s.foot(*border_end))
    d = l_s.direction
    if d @ (np.array(free_end) - np.array(border_end)) < 0:
        d = -d
    length = float(d @ (np.array(free_end) - start))
    k = np.arange(0, int(math.floor(length / stride)) + 1)
    pts = np.rint(start[None, :] + (k * stride)[:, None] * d[None, :]).astype(int)
    b = mask.bits
    h, w = b.shape
    u, v = pts[:, 0], pts[:, 1]
    inside = (u >= 1) & (v >= 1) & (u <= w - 2) & (v <= h - 2)
    u, v = u[inside], v[inside]
    ok = b[v, u] & b[v, u - 1] & b[v, u + 1] & b[v - 1, u] & b[v + 1, u]
    u, v = u[ok], v[ok]
    # snapping can map neighbouring samples to the same pixel
    keep = np.ones(len(u), bool)
    keep[1:] = (u[1:] != u[:-1]) | (v[1:] != v[:-1])
    pixels = [Pixel(float(a), float(c)) for a, c in zip(u[keep], v[keep])]
    if len(pixels) < 2:
        raise InsufficientSamples(f"{len(pixels)} interior samples along the axis line")
    return pixels


def metric_depths_along_axis(axis, K, pixels):
    """Surface depths along the pixels' rays; misses are dropped with their pixel."""
    us = np.array([p.u for p in pixels], dtype=float)
    vs = np.array([p.v for p in pixels], dtype=float)
    z = geo.ray_cylinder_depths(axis, K, us, vs)
    hit = np.isfinite(z)
    if hit.sum() < 2:
        raise InsufficientSamples(f"{int(hit.sum())} samples hit the shaft")
    return [p for p, h in zip(pixels, hit) if h], z[hit]


def fit_scale(metric, relative):
    """Least-squares ``(eta, gamma)`` minimizing ``sum (eta*z + gamma - D)^2``."""
    z = np.asarray(metric, dtype=float)
    D = np.asarray(relative, dtype=float)
    if z.shape != D.shape or z.ndim != 1:
        raise DimensionMismatch("metric and relative samples must be equal-length vectors")
    if len(z) < 2:
        raise InsufficientSamples("need at least two samples")
    zm, Dm = z.mean(), D.mean()
    dz = z - zm
    szz = float(dz @ dz)
    if szz <= (1e-14 * max(1.0, abs(zm))) ** 2 * len(z):
        raise DegenerateDesign("metric depths have zero variance")
    eta = float(dz @ (D - Dm)) / szz
    if not abs(eta) > ETA_TOL:
        raise NumericalFailure(f"fitted eta {eta} is numerically zero")
    gamma = Dm - eta * zm
    res = eta * z + gamma - D
    return ScaleParams(eta, gamma, len(z), float(np.sqrt(np.mean(res * res))))


def apply_scale(d, p):
    """Metric depth ``(D - gamma) / eta``, negatives clamped to zero."""
    if d.unit is not Unit.RELATIVE:
        raise UnitMismatch("apply_scale expects a relative depth map")
    if not abs(p.eta) > ETA_TOL:
        raise ZeroEta(f"eta = {p.eta}")
    a = (d.values - p.gamma) / p.eta
    neg = a < 0
    return DepthMap(np.where(neg, 0.0, a), Unit.MILLIMETERS, n_clamped=int(neg.sum()))


def sample_relative(d, pixels):
    u = np.array([int(p.u) for p in pixels])
    v = np.array([int(p.v) for p in pixels])
    return d.values[v, u]


def observe(mask, K, r_s, cfg=RecoveryConfig()):
    """Shaft observation from a mask: boundary lines, quality and tip pixel."""
    l_m, l_p, quality = extract_shaft_boundaries(mask, seed=cfg.ransac_seed)
    # the tip is searched along the axis image line, which needs the axis first
    axis = estimate_axis(l_m, l_p, K, r_s, mask.centroid())
    tip = refine_tip_pixel(axis, K, extract_tip_pixel(mask, geo.axis_image_line(axis, K)))
    return ShaftObservation(l_m, l_p, tip, quality)


def refine_tip_pixel(axis, K, px):
    """Move a rim pixel at the shaft end to the projection of the axis end point.

    The last mask pixel along the axis line images the shaft surface on the
    tip's rim, which sits ``r_s`` off the axis. Its ray hit fixes the axial
    position of the tip; the tip pixel is that axis point's projection.
    """
    z = geo.ray_cylinder_depth(axis, K, px)
    if z is None:
        return px
    hit = z * K.ray(px)
    p0 = axis.closest_point
    tip = p0 + float(axis.s @ (hit - p0)) * axis.s
    if tip[2] <= 0:
        return px
    return geo.project_point(K, tip)


def recover_frame(relative, mask, K, r_s, cfg=RecoveryConfig(), observation=None):
    """Metric depth for one frame.

    ``observation`` replaces boundary/tip extraction from the mask when given
    (e.g. primitives from an external detector). Any stage failure is raised as
    :class:`FrameRejected` carrying the failing error's class name.
    """
    if (relative.width, relative.height) != (mask.width, mask.height):
        raise FrameRejected("DimensionMismatch", "relative map and mask differ in size")
    try:
        obs = observation if observation is not None else observe(mask, K, r_s, cfg)
        if obs.quality < cfg.min_quality:
            raise FrameRejected("LowQuality", f"boundary quality {obs.quality:.3f}")
        pose = estimate_pose(obs, K, r_s, row_fallback=cfg.row_fallback)
        l_s = geo.axis_image_line(pose.axis, K)
        pixels = sample_axis_pixels(mask, l_s, cfg.stride)
        pixels, z = metric_depths_along_axis(pose.axis, K, pixels)
        if len(pixels) < cfg.min_samples:
            raise FrameRejected("InsufficientSamples", f"{len(pixels)} < {cfg.min_samples}")
        samples = AxisSampleSet(tuple(pixels), z, sample_relative(relative, pixels))
        params = samples.fit()
        absolute = apply_scale(relative, params)
    except FrameRejected:
        raise
    except DataError as exc:
        raise FrameRejected(type(exc).__name__, str(exc)) from exc
    return absolute, pose, params
