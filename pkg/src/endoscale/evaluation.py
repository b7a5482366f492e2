"""Depth error metrics, median scaling and instrument pose errors."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import DimensionMismatch, EmptyList, NoValidPixels, ZeroMedian
from .maps import DepthMap, Unit


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    mae: float
    delta_125: float
    n_pixels: int


@dataclass(frozen=True)
class PoseErrors:
    ori_x_deg: float
    ori_y_deg: float
    tip_x_mm: float
    tip_y_mm: float
    tip_z_mm: float


def _valid(pred, gt, valid):
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"{pred.shape} vs {gt.shape}")
    sel = gt.values > 0
    if valid is not None:
        v = valid.bits if hasattr(valid, "bits") else np.asarray(valid, bool)
        if v.shape != gt.shape:
            raise DimensionMismatch("validity mask has the wrong shape")
        sel &= v
    if not sel.any():
        raise NoValidPixels("no pixel has positive ground truth")
    return pred.values[sel], gt.values[sel]


def delta_accuracy(p, g, threshold=1.25):
    """Fraction of pixels with ``max(p/g, g/p) < threshold``; ``p <= 0`` counts as a failure."""
    pos = p > 0
    ratio = np.full(p.shape, np.inf)
    with np.errstate(over="ignore"):  # tiny positive p: ratio overflows to inf, a failure anyway
        ratio[pos] = np.maximum(p[pos] / g[pos], g[pos] / p[pos])
    return float(np.mean(ratio < threshold))


def depth_metrics(pred, gt, valid=None):
    p, g = _valid(pred, gt, valid)
    err = p - g
    pos = p > 0
    if pos.any():
        rmse_log = math.sqrt(float(np.mean((np.log(p[pos]) - np.log(g[pos])) ** 2)))
    else:
        rmse_log = math.inf
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(err) / g)),
        sq_rel=float(np.mean(err ** 2 / g)),
        rmse=math.sqrt(float(np.mean(err ** 2))),
        rmse_log=rmse_log,
        mae=float(np.mean(np.abs(err))),
        delta_125=delta_accuracy(p, g),
        n_pixels=int(g.size),
    )


def median_scale_factor(pred, gt, valid=None):
    """``median(gt) / median(pred)`` over valid pixels."""
    p, g = _valid(pred, gt, valid)
    mp = float(np.median(p))
    if mp == 0:
        raise ZeroMedian("prediction median is zero")
    return float(np.median(g)) / mp


def median_rescaled(pred, gt, valid=None):
    f = median_scale_factor(pred, gt, valid)
    return DepthMap(pred.values * f, Unit.MILLIMETERS), f


def _projected_angle(a, b, i, j):
    """Undirected angle (deg) between 2-D projections ``(a_i, a_j)`` and ``(b_i, b_j)``."""
    pa = np.array([a[i], a[j]])
    pb = np.array([b[i], b[j]])
    na, nb = np.linalg.norm(pa), np.linalg.norm(pb)
    if na < 1e-9 or nb < 1e-9:
        return 0.0
    ang = math.degrees(math.atan2(abs(pa[0] * pb[1] - pa[1] * pb[0]), pa @ pb))
    return min(ang, 180.0 - ang)


def pose_errors(est, gt):
    """Orientation errors about camera X and Y plus per-axis tip errors.

    Ori X compares the shaft directions projected on the camera Y-Z plane, Ori Y
    on the X-Z plane. Shaft directions are undirected lines, so angles are
    folded into [0, 90] degrees.
    """
    s1, s2 = est.axis.s, gt.axis.s
    dt = np.abs(np.asarray(est.tip_point, float) - np.asarray(gt.tip_point, float))
    return PoseErrors(
        ori_x_deg=_projected_angle(s1, s2, 1, 2),
        ori_y_deg=_projected_angle(s1, s2, 0, 2),
        tip_x_mm=float(dt[0]),
        tip_y_mm=float(dt[1]),
        tip_z_mm=float(dt[2]),
    )


def aggregate(records):
    """Per-field ``(mean, population std)`` over a list of metric dataclasses."""
    if not records:
        raise EmptyList("nothing to aggregate")
    out = {}
    for f in fields(records[0]):
        x = np.array([getattr(r, f.name) for r in records], dtype=float)
        out[f.name] = (float(np.mean(x)), float(np.std(x)))
    return out


def to_dict(record):
    return asdict(record)
