"""Synthetic ground truth: ray-cast finite shafts over a background plane.

All randomized helpers take explicit seeds. Per-trial generators are derived
from ``(seed, trial_index)`` so any subset of trials can be reproduced
independently and in any order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import geometry as geo
from .errors import DataError, EmptyFrustum, ZeroEta
from .evaluation import PoseErrors, pose_errors
from .geometry import CameraIntrinsics, CylinderAxis, ImageLine, Pixel, Point3
from .maps import DepthMap, ShaftMask, Unit
from .pose import ShaftObservation, ToolPose, estimate_pose
from .scale import RecoveryConfig, recover_frame

DEFAULT_RADIUS = 4.5
DEFAULT_Z_BG = 150.0


def default_intrinsics():
    return CameraIntrinsics(500.0, 500.0, 320.0, 256.0, 640, 512)


@dataclass(frozen=True, eq=False)
class SceneSpec:
    """A finite shaft ``origin + t * axis.s`` for ``t`` in ``[t0, t1]`` over a plane ``z = z_bg``."""

    K: CameraIntrinsics
    axis: CylinderAxis
    origin: np.ndarray
    t0: float
    t1: float
    tip: Point3
    z_bg: float = DEFAULT_Z_BG
    seed: int = 0

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError("shaft extent must satisfy t1 > t0")
        o = np.asarray(self.origin, dtype=float)
        if self.axis.distance_to(o) > 1e-6:
            raise ValueError("origin must lie on the axis")
        ends = [o + self.t0 * self.axis.s, o + self.t1 * self.axis.s]
        tip = np.asarray(self.tip, dtype=float)
        if min(np.linalg.norm(tip - e) for e in ends) > 1e-6:
            raise ValueError("tip must be one end of the shaft")
        if not tip[2] > 0:
            raise ValueError("tip must be in front of the camera")
        px = geo.project_point(self.K, tip)
        if not (0 <= px.u <= self.K.width - 1 and 0 <= px.v <= self.K.height - 1):
            raise ValueError("tip projects outside the image")
        if not self.z_bg > max(e[2] for e in ends) + self.axis.r_s:
            raise ValueError("background must lie behind the shaft")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "tip", Point3(*map(float, tip)))

    @classmethod
    def from_tip(cls, K, tip, body_direction, r_s=DEFAULT_RADIUS, length=400.0,
                 z_bg=DEFAULT_Z_BG, seed=0):
        """Shaft that starts at ``tip`` and extends ``length`` mm along ``body_direction``."""
        tip = np.asarray(tip, dtype=float)
        axis = CylinderAxis.from_point_direction(tip, body_direction, r_s)
        along = float(np.dot(axis.s, body_direction))
        t0, t1 = (0.0, length) if along > 0 else (-length, 0.0)
        return cls(K, axis, tip, t0, t1, Point3(*tip), z_bg, seed)

    @property
    def pose(self):
        return ToolPose(self.axis, self.tip)


@dataclass(frozen=True)
class NoiseSpec:
    boundary_angle_deg: float = 0.0
    boundary_offset_px: float = 0.0
    depth_mult_sigma: float = 0.0
    tip_px_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("boundary_angle_deg", "boundary_offset_px", "depth_mult_sigma", "tip_px_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def render(spec, w=None, h=None):
    """Ray-cast metric depth and shaft mask.

    Solves the hit in the plane orthogonal to the axis (independently of the
    quadric form used in :mod:`endoscale.geometry`).
    """
    K = spec.K
    w = K.width if w is None else w
    h = K.height if h is None else h
    u, v = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    d = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1)
    s = spec.axis.s
    p0 = spec.axis.closest_point
    d_perp = d - (d @ s)[..., None] * s
    a = np.sum(d_perp * d_perp, axis=-1)
    b = d_perp @ p0
    c = float(p0 @ p0) - spec.axis.r_s ** 2
    disc = b * b - a * c
    hit = (disc >= 0) & (b > 0) & (a > 0)
    root = np.sqrt(np.where(hit, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(hit, c / (b + root), np.nan)
    point = t[..., None] * d
    axial = (point - spec.origin) @ s
    hit &= (axial >= spec.t0) & (axial <= spec.t1) & (t > 0) & (t < spec.z_bg)
    depth = np.where(hit, t, spec.z_bg)
    if not hit.any():
        raise EmptyFrustum("the shaft is not visible")
    return DepthMap(depth, Unit.MILLIMETERS), ShaftMask(hit)


def make_relative(gt, eta, gamma, noise=NoiseSpec()):
    """Affine-distorted depth ``(eta * gt + gamma) * (1 + N(0, sigma))``, clamped at zero."""
    if eta == 0:
        raise ZeroEta("eta must be nonzero")
    D = eta * gt.values + gamma
    if noise.depth_mult_sigma > 0:
        rng = np.random.default_rng(noise.seed)
        D = D * (1.0 + rng.normal(0.0, noise.depth_mult_sigma, D.shape))
    neg = D < 0
    return DepthMap(np.where(neg, 0.0, D), Unit.RELATIVE, n_clamped=int(neg.sum()))


def analytic_observation(spec):
    l_m, l_p = geo.silhouette_lines(spec.axis, spec.K)
    return ShaftObservation(l_m, l_p, geo.project_point(spec.K, spec.tip), 1.0)


def _perturb_line(line, sig_theta, sig_rho, rng):
    # Hesse normal form: u cos(theta) + v sin(theta) = rho
    theta = math.atan2(line.b, line.a) + rng.normal(0.0, sig_theta)
    rho = -line.c + rng.normal(0.0, sig_rho)
    return ImageLine(math.cos(theta), math.sin(theta), -rho)


def perturb_observation(obs, noise, rng=None):
    """Jitter both boundary lines in Hesse normal form and the tip pixel."""
    if noise.boundary_angle_deg == 0 and noise.boundary_offset_px == 0 and noise.tip_px_sigma == 0:
        return obs
    rng = np.random.default_rng(noise.seed) if rng is None else rng
    sig_t = math.radians(noise.boundary_angle_deg)
    sig_r = noise.boundary_offset_px
    l_m = _perturb_line(obs.line_minus, sig_t, sig_r, rng)
    l_p = _perturb_line(obs.line_plus, sig_t, sig_r, rng)
    du, dv = rng.normal(0.0, noise.tip_px_sigma, 2)
    return ShaftObservation(l_m, l_p, Pixel(obs.tip.u + du, obs.tip.v + dv), obs.quality)


def trial_rng(seed, index):
    return np.random.default_rng([int(seed), int(index)])


def random_scene(rng, K=None, r_s=DEFAULT_RADIUS, depth_range=(20.0, 150.0),
                 z_bg=DEFAULT_Z_BG, margin=40, max_cos_z=0.95, min_clearance=2.0):
    """Random shaft with its tip inside the image.

    The tip depth is uniform in ``depth_range``; the body direction is uniform
    on the hemisphere facing the camera (negative z) with grazing views
    (``|s.z| >= max_cos_z``) excluded. Configurations where the camera is
    closer than ``min_clearance * r_s`` to the axis are redrawn.
    """
    K = default_intrinsics() if K is None else K
    while True:
        u = rng.uniform(margin, K.width - 1 - margin)
        v = rng.uniform(margin, K.height - 1 - margin)
        z = rng.uniform(*depth_range)
        tip = z * K.ray((u, v))
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        if d[2] > 0:
            d[2] = -d[2]
        if abs(d[2]) >= max_cos_z:
            continue
        axis = CylinderAxis.from_point_direction(tip, d, r_s)
        if np.linalg.norm(axis.m) < min_clearance * r_s:
            continue
        bg = max(z_bg, tip[2] + r_s + 10.0)
        return SceneSpec.from_tip(K, tip, d, r_s, length=1000.0, z_bg=bg)


def pose_trial(index, seed, noise, K=None, r_s=DEFAULT_RADIUS, depth_range=(20.0, 150.0)):
    """One Monte-Carlo pose trial; returns :class:`PoseErrors` or the rejection reason."""
    rng = trial_rng(seed, index)
    spec = random_scene(rng, K, r_s, depth_range)
    try:
        obs = perturb_observation(analytic_observation(spec), noise, rng)
        est = estimate_pose(obs, spec.K, r_s)
    except DataError as exc:
        return type(exc).__name__
    return pose_errors(est, spec.pose)


def monte_carlo_pose(trials, noise, seed=0, K=None, r_s=DEFAULT_RADIUS, depth_range=(20.0, 150.0)):
    """Run ``trials`` pose trials; returns ``(errors, rejections)``.

    ``rejections`` maps trial index to the rejection reason.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    errors, rejected = [], {}
    for i in range(trials):
        r = pose_trial(i, seed, noise, K, r_s, depth_range)
        if isinstance(r, PoseErrors):
            errors.append(r)
        else:
            rejected[i] = r
    return errors, rejected


def scale_trial(index, seed, noise, K=None, r_s=DEFAULT_RADIUS, depth_range=(20.0, 120.0),
                eta_range=(0.01, 0.05), gamma_range=(0.0, 0.5), cfg=None):
    """Render a frame, distort its depth, recover metric depth from a noisy observation.

    Returns ``(gt, recovered, true (eta, gamma), ScaleParams)``; raises
    :class:`~endoscale.errors.FrameRejected` on rejection.
    """
    rng = trial_rng(seed, index)
    spec = random_scene(rng, K, r_s, depth_range)
    gt, mask = render(spec)
    eta = rng.uniform(*eta_range)
    gamma = rng.uniform(*gamma_range)
    rel = make_relative(gt, eta, gamma, replace(noise, seed=int(rng.integers(2 ** 63))))
    obs = perturb_observation(analytic_observation(spec), noise, rng)
    absolute, _, params = recover_frame(rel, mask, spec.K, r_s, cfg or RecoveryConfig(), observation=obs)
    return gt, absolute, (eta, gamma), params
