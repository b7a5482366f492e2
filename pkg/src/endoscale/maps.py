"""Depth map and shaft mask containers."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, InvalidSize, UnitMismatch


class Unit(str, enum.Enum):
    RELATIVE = "relative"
    MILLIMETERS = "mm"


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Row-major depth grid (``values[v, u]``) with a unit tag.

    ``n_clamped`` counts pixels that the producing operation clamped to zero.
    """

    values: np.ndarray
    unit: Unit = Unit.RELATIVE
    n_clamped: int = 0

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise DimensionMismatch(f"depth map must be 2-D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("depth values must be finite")
        if np.any(vals < 0):
            raise ValueError("depth values must be non-negative")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "unit", Unit(self.unit))

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def with_values(self, values, **kw):
        return replace(self, values=values, **kw)

    def check_compatible(self, other):
        if self.shape != other.shape:
            raise DimensionMismatch(f"{self.shape} vs {other.shape}")
        if self.unit != other.unit:
            raise UnitMismatch(f"{self.unit.value} vs {other.unit.value}")


@dataclass(frozen=True, eq=False)
class ShaftMask:
    """Binary occupancy grid, ``bits[v, u]``."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.array(self.bits, dtype=bool)
        if b.ndim != 2:
            raise DimensionMismatch(f"mask must be 2-D, got shape {b.shape}")
        b.flags.writeable = False
        object.__setattr__(self, "bits", b)

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def count(self):
        return int(self.bits.sum())

    def centroid(self):
        vs, us = np.nonzero(self.bits)
        return float(us.mean()), float(vs.mean())


def _source_coords(n_out, n_in):
    x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(x, 0.0, n_in - 1)
    i0 = np.minimum(np.floor(x).astype(int), max(n_in - 2, 0))
    frac = x - i0
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, frac


def resize_bilinear(d, w, h):
    """Bilinear resampling with pixel-center alignment and edge clamping."""
    if w < 2 or h < 2:
        raise InvalidSize(f"target size {w}x{h} must be at least 2x2")
    if (w, h) == (d.width, d.height):
        return d.with_values(d.values.copy(), n_clamped=0)
    src = d.values
    x0, x1, fx = _source_coords(w, d.width)
    y0, y1, fy = _source_coords(h, d.height)
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy)[:, None] + bot * fy[:, None]
    # convex weights keep a constant map constant up to rounding; make it exact
    out = np.clip(out, src.min(), src.max())
    return d.with_values(out, n_clamped=0)
