"""Guided-filter fusion of a low-resolution and a high-resolution relative depth map.

The low-resolution estimate carries consistent global structure, the
high-resolution one carries detail. The low map (upsampled) guides a guided
filter applied to the high map.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMedian, DimensionMismatch, InvalidSize, NonPositiveEpsilon, UnitMismatch
from .maps import DepthMap, Unit, resize_bilinear


@dataclass(frozen=True)
class FusionConfig:
    filter_radius: int = 8
    epsilon: float = 1e-4
    low_res: tuple = (320, 256)
    high_res: tuple = (480, 384)
    domain: str = "depth"  # or "inverse"

    def __post_init__(self):
        if self.filter_radius < 1:
            raise InvalidSize("filter radius must be >= 1")
        if not self.epsilon > 0:
            raise NonPositiveEpsilon("epsilon must be positive")
        lw, lh = self.low_res
        hw, hh = self.high_res
        if not (hw > lw and hh > lh):
            raise InvalidSize(
                f"high resolution {hw}x{hh} must exceed low resolution {lw}x{lh} in both dimensions")
        if self.domain not in ("depth", "inverse"):
            raise ValueError(f"unknown fusion domain {self.domain!r}")


def box_mean(x, r):
    """Mean over the (2r+1)^2 window clipped to the image, O(N) via cumulative sums."""
    h, w = x.shape
    c = np.zeros((h + 1, w + 1))
    np.cumsum(x, axis=0, out=c[1:, 1:])
    np.cumsum(c[1:, 1:], axis=1, out=c[1:, 1:])
    y0 = np.clip(np.arange(h) - r, 0, h)
    y1 = np.clip(np.arange(h) + r + 1, 0, h)
    x0 = np.clip(np.arange(w) - r, 0, w)
    x1 = np.clip(np.arange(w) + r + 1, 0, w)
    s = (c[y1][:, x1] - c[y0][:, x1]) - (c[y1][:, x0] - c[y0][:, x0])
    area = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    return s / area


def guided_filter_array(I, p, radius, eps):
    """Guided filter on raw arrays; returns the unclamped output."""
    # filter is equivariant to constant offsets; centering keeps var/cov well conditioned
    mi, mp = I.mean(), p.mean()
    I = I - mi
    p = p - mp
    mean_I = box_mean(I, radius)
    mean_p = box_mean(p, radius)
    cov_Ip = box_mean(I * p, radius) - mean_I * mean_p
    var_I = box_mean(I * I, radius) - mean_I * mean_I
    a = cov_Ip / (var_I + eps)
    b = mean_p - a * mean_I
    return box_mean(a, radius) * I + box_mean(b, radius) + mp


def guided_filter(guide, src, radius, epsilon):
    if guide.shape != src.shape:
        raise DimensionMismatch(f"guide {guide.shape} vs input {src.shape}")
    if guide.unit != src.unit:
        raise UnitMismatch(f"{guide.unit.value} vs {src.unit.value}")
    if not epsilon > 0:
        raise NonPositiveEpsilon("epsilon must be positive")
    if radius < 1:
        raise InvalidSize("radius must be >= 1")
    q = guided_filter_array(guide.values, src.values, int(radius), float(epsilon))
    neg = q < 0
    return src.with_values(np.where(neg, 0.0, q), n_clamped=int(neg.sum()))


def fuse_multires(low, high, cfg=FusionConfig()):
    """Fuse ``low`` (at ``cfg.low_res``) and ``high`` (at ``cfg.high_res``).

    Steps: upsample ``low``; rescale ``high`` so both share a median; guided
    filter with the upsampled low map as guide. Filtering runs on
    median-normalized values so ``epsilon`` is scale free.
    """
    if (low.width, low.height) != tuple(cfg.low_res):
        raise DimensionMismatch(f"low map is {low.width}x{low.height}, expected {cfg.low_res}")
    if (high.width, high.height) != tuple(cfg.high_res):
        raise DimensionMismatch(f"high map is {high.width}x{high.height}, expected {cfg.high_res}")
    if low.unit is not Unit.RELATIVE or high.unit is not Unit.RELATIVE:
        raise UnitMismatch("fusion expects relative depth maps")

    lo = low.values
    hi = high.values
    if cfg.domain == "inverse":
        if np.any(lo <= 0) or np.any(hi <= 0):
            raise DegenerateMedian("inverse-depth fusion needs strictly positive depths")
        lo, hi = 1.0 / lo, 1.0 / hi
    low_up = resize_bilinear(DepthMap(lo, Unit.RELATIVE), high.width, high.height).values

    med_low = float(np.median(low_up))
    med_high = float(np.median(hi))
    if med_high == 0 or med_low == 0:
        raise DegenerateMedian("median of a fusion input is zero")
    guide = low_up / med_low
    src = hi / med_high

    q = guided_filter_array(guide, src, cfg.filter_radius, cfg.epsilon) * med_low
    neg = q < 0
    q[neg] = 0.0
    if cfg.domain == "inverse":
        with np.errstate(divide="ignore"):
            q = np.where(q > 0, 1.0 / q, 0.0)
    return DepthMap(q, Unit.RELATIVE, n_clamped=int(neg.sum()))
