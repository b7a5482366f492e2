"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run standalone with ``python -m tests.test_acceptance`` for the summary only.
"""
import hashlib
import math
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from endoscale import cli, io
from endoscale import geometry as geo
from endoscale.config import PipelineConfig
from endoscale.errors import FrameRejected
from endoscale.evaluation import depth_metrics, median_rescaled
from endoscale.fusion import FusionConfig, box_mean, fuse_multires, guided_filter, guided_filter_array
from endoscale.maps import DepthMap, ShaftMask, Unit
from endoscale.pose import estimate_axis, estimate_pose
from endoscale.scale import RecoveryConfig, recover_frame
from endoscale.synthetic import (
    NoiseSpec,
    analytic_observation,
    default_intrinsics,
    make_relative,
    monte_carlo_pose,
    random_scene,
    render,
    scale_trial,
    trial_rng,
)

from .test_fusion import brute_guided

K = default_intrinsics()
SEED = 0


def report(n, ok, detail):
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    return ok


def angle_deg(a, b):
    # atan2 form: acos cannot resolve angles below ~1e-6 deg
    return math.degrees(math.atan2(np.linalg.norm(np.cross(a, b)), abs(float(a @ b))))


# -------------------------------------------------------------- criteria

def check_1():
    """Geometry exactness on 1000 random cylinders, under 10 s."""
    t0 = time.perf_counter()
    worst = dict(tangency=0.0, roundtrip=0.0, tip=0.0, direction=0.0)
    for i in range(1000):
        rng = trial_rng(SEED, i)
        spec = random_scene(rng, K, r_s=rng.uniform(2.0, 6.0), depth_range=(20.0, 150.0))
        axis = spec.axis
        lm, lp = geo.silhouette_lines(axis, K)
        for l in (lm, lp):
            n = K.K.T @ l.vec
            n /= np.linalg.norm(n)
            # a tangent plane contains the axis direction and sits r_s from the axis
            res = max(abs(n @ axis.s), abs(abs(n @ axis.closest_point) - axis.r_s) / axis.r_s)
            worst["tangency"] = max(worst["tangency"], res)
        est = estimate_axis(lm, lp, K, axis.r_s, geo._axis_pixel(axis, K))
        em, ep = geo.silhouette_lines(est, K)
        scale = max(1.0, abs(lm.c), abs(lp.c))
        err = max(min(geo.line_distance(em, lm), geo.line_distance(em, lp)),
                  min(geo.line_distance(ep, lm), geo.line_distance(ep, lp))) / scale
        worst["roundtrip"] = max(worst["roundtrip"], err)
        pose = estimate_pose(analytic_observation(spec), K, axis.r_s)
        worst["tip"] = max(worst["tip"], float(np.linalg.norm(np.subtract(pose.tip_point, spec.tip))))
        worst["direction"] = max(worst["direction"], angle_deg(pose.axis.s, axis.s))
    dt = time.perf_counter() - t0
    ok = (worst["tangency"] < 1e-9 and worst["roundtrip"] < 1e-9 and worst["tip"] < 1e-6
          and worst["direction"] < 1e-6 and dt < 10.0)
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + f", {dt:.2f} s"
    return ok, detail


def check_2():
    """Quadric residual identity on 1e4 pairs; renderer vs ray cast on 10 frames."""
    rng = np.random.default_rng([SEED, 2])
    worst_q = 0.0
    for _ in range(10_000):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        axis = geo.CylinderAxis.from_point_direction(rng.uniform(-50, 50, 3) + [0, 0, 80], d,
                                                     rng.uniform(2.0, 6.0))
        p = rng.uniform(-100, 100, 3) + [0, 0, 80]
        c = axis.closest_point
        dist2 = float(np.sum(np.cross(p - c, axis.s) ** 2))
        ref = dist2 - axis.r_s ** 2
        q = geo.quadric_residual(axis, p)
        worst_q = max(worst_q, abs(q - ref) / max(dist2, axis.r_s ** 2))
    worst_d = 0.0
    for i in range(10):
        spec = random_scene(trial_rng(SEED + 2, i), K)
        gt, mask = render(spec)
        vs, us = np.nonzero(mask.bits)
        ray = geo.ray_cylinder_depths(spec.axis, K, us.astype(float), vs.astype(float))
        worst_d = max(worst_d, float(np.max(np.abs(ray - gt.values[vs, us]))))
    ok = worst_q < 1e-9 and worst_d < 1e-9
    return ok, f"quadric rel {worst_q:.2e}, render vs ray {worst_d:.2e} mm"


def check_3():
    """Noise-free scale recovery: depth within 1e-5 mm, (eta, gamma) within 1e-9 relative."""
    cases = [(eta, gamma) for eta in (0.01, 0.04, 1.0) for gamma in (0.0, 0.3)] + [(0.04, -0.2)]
    worst_depth, worst_param = 0.0, 0.0
    for i, (eta, gamma) in enumerate(cases):
        spec = random_scene(trial_rng(SEED + 3, i), K, depth_range=(20.0, 120.0))
        gt, mask = render(spec)
        rel = make_relative(gt, eta, gamma)
        assert rel.n_clamped == 0
        absolute, _, p = recover_frame(rel, mask, K, spec.axis.r_s, RecoveryConfig(),
                                       observation=analytic_observation(spec))
        worst_depth = max(worst_depth, float(np.max(np.abs(absolute.values - gt.values))))
        worst_param = max(worst_param, abs(p.eta - eta) / eta,
                          abs(p.gamma - gamma) / max(abs(gamma), eta))
    ok = worst_depth < 1e-5 and worst_param < 1e-9
    return ok, f"{len(cases)} frames, max depth error {worst_depth:.2e} mm, max param error {worst_param:.2e}"


def check_4():
    """Noisy pose Monte-Carlo: 200 trials against fixed ceilings, under 60 s."""
    t0 = time.perf_counter()
    noise = NoiseSpec(boundary_angle_deg=0.1, boundary_offset_px=1.0, tip_px_sigma=1.0)
    errors, rejected = monte_carlo_pose(200, noise, SEED, K, 4.5, (20.0, 150.0))
    dt = time.perf_counter() - t0
    mean = {k: float(np.mean([getattr(e, k) for e in errors])) for k, _ in cli.POSE_COLUMNS}
    rate = len(rejected) / 200
    ok = (mean["ori_x_deg"] <= 5 and mean["ori_y_deg"] <= 5 and mean["tip_x_mm"] <= 3
          and mean["tip_y_mm"] <= 3 and mean["tip_z_mm"] <= 6 and rate < 0.05 and dt < 60)
    detail = ", ".join(f"{name} {mean[k]:.3f}" for k, name in cli.POSE_COLUMNS)
    return ok, f"{detail}, rejected {rate:.1%}, {dt:.1f} s"


def check_5():
    """Noisy scale Monte-Carlo: median of per-frame median ratios in [0.93, 1.07]."""
    noise = NoiseSpec(boundary_offset_px=1.0, depth_mult_sigma=0.02)
    ratios, rejected = [], 0
    for i in range(200):
        try:
            gt, absolute, _, _ = scale_trial(i, SEED + 5, noise, K)
        except FrameRejected:
            rejected += 1
            continue
        with np.errstate(divide="ignore"):
            # a fully clamped map counts as an infinite ratio, not a skipped frame
            ratios.append(np.median(gt.values) / np.median(absolute.values))
    med = float(np.median(ratios))
    ok = 0.93 <= med <= 1.07
    return ok, (f"median ratio {med:.4f} (IQR {np.percentile(ratios, 25):.3f}-{np.percentile(ratios, 75):.3f}),"
                f" {rejected} rejected of 200")


def check_6():
    """Guided filter against a direct sliding-window reference, plus its limits."""
    worst = 0.0
    for radius in (1, 4, 8):
        for eps in (1e-6, 1e-2):
            rng = np.random.default_rng([SEED, 6, radius])
            I, p = rng.random((64, 64)), rng.random((64, 64))
            worst = max(worst, float(np.max(np.abs(guided_filter_array(I, p, radius, eps)
                                                   - brute_guided(I, p, radius, eps)))))
    c = DepthMap(np.full((64, 64), 3.25))
    const_err = float(np.max(np.abs(guided_filter(c, c, 4, 1e-4).values - 3.25)))
    x = DepthMap(np.random.default_rng([SEED, 6]).random((64, 64)) + 1.0)
    big = guided_filter(x, x, 4, 1e12).values
    # a -> 0 leaves the mean of the per-window means: the box filter applied twice
    limit = float(np.max(np.abs(big - box_mean(box_mean(x.values, 4), 4)) / big))
    single = float(np.max(np.abs(big - box_mean(x.values, 4)) / big))
    ok = worst < 1e-6 and const_err < 1e-12 and limit < 1e-6
    return ok, (f"oracle {worst:.2e}, constant {const_err:.1e}, large-eps vs box(box) {limit:.1e}"
                f" (vs single box {single:.1e})")


def fusion_frame(index, seed=SEED + 7):
    rng = trial_rng(seed, index)
    spec = random_scene(rng, K, depth_range=(20.0, 120.0))
    cfg = FusionConfig()
    lw, lh = cfg.low_res
    hw, hh = cfg.high_res
    gt_low, _ = render(replace(spec, K=K.scaled(lw / K.width, lh / K.height)))
    gt_high, _ = render(replace(spec, K=K.scaled(hw / K.width, hh / K.height)))
    eta, gamma = rng.uniform(0.01, 0.05), rng.uniform(0.0, 0.5)
    low = make_relative(gt_low, eta, gamma)
    reference = make_relative(gt_high, eta, gamma).values
    high = make_relative(gt_high, eta, gamma, NoiseSpec(depth_mult_sigma=0.02, seed=int(rng.integers(2 ** 63))))
    fused = fuse_multires(low, high, cfg).values
    rmse = lambda a: float(np.sqrt(np.mean((a - reference) ** 2)))  # noqa: E731
    return rmse(fused), rmse(high.values)


def check_7():
    """Fusion beats the noisy high-resolution input on every one of 20 frames."""
    pairs = [fusion_frame(i) for i in range(20)]
    ratios = np.array([f / h for f, h in pairs])
    worse = [i for i, r in enumerate(ratios) if r >= 1]
    ok = not worse
    return ok, (f"fused/high RMSE median {np.median(ratios):.3f}, max {ratios.max():.3f},"
                f" {20 - len(worse)}/20 frames improved" + (f" (not: {worse})" if worse else ""))


def check_8():
    """Metric oracle and median-rescaling invariance."""
    mm = lambda v: DepthMap(np.array([v], float), Unit.MILLIMETERS)  # noqa: E731
    m = depth_metrics(mm([2.0, 2.0]), mm([1.0, 2.0]))
    exact = (m.abs_rel == 0.5 and m.rmse == math.sqrt(0.5) and m.delta_125 == 0.5
             and m.rmse_log == math.sqrt(math.log(2) ** 2 / 2))
    gt = DepthMap(np.random.default_rng([SEED, 8]).uniform(10, 100, (32, 32)), Unit.MILLIMETERS)
    inv = True
    for c in (0.5, 2.0):
        rescaled, _ = median_rescaled(gt.with_values(c * gt.values), gt)
        r = depth_metrics(rescaled, gt)
        inv &= r.abs_rel < 1e-12 and r.delta_125 == 1.0
    return exact and inv, f"two-pixel example exact {exact}, rescaling invariance {inv}"


def _tree(root):
    root = Path(root)
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def check_9():
    """Every CLI command is byte-identical on rerun; PFM and PGM round trips are bit exact."""
    same = {}
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        ds = tmp / "ds"
        assert cli.main(["synth", "--out", str(ds), "--frames", "3"]) == 0
        rng = np.random.default_rng([SEED, 9])
        io.write_pfm(tmp / "lo.pfm", rng.uniform(1, 2, (256, 320)).astype(np.float32))
        io.write_pfm(tmp / "hi.pfm", rng.uniform(1, 2, (384, 480)).astype(np.float32))
        runs = {
            "synth": lambda o: ["synth", "--out", str(o), "--frames", "3"],
            "fuse": lambda o: ["fuse", str(tmp / "lo.pfm"), str(tmp / "hi.pfm"), "--out", str(o / "f.pfm")],
            "recover": lambda o: ["recover", "--manifest", str(ds / "manifest.jsonl"), "--out", str(o)],
            "eval": lambda o: ["eval", str(ds / "gt"), str(ds / "gt"), "--out", str(o / "r.jsonl")],
            "pose-bench": lambda o: ["pose-bench", "--trials", "20", "--out", str(o / "b.jsonl")],
        }
        for name, argv in runs.items():
            trees = []
            for k in range(2):
                out = tmp / f"{name}{k}"
                out.mkdir()
                assert cli.main(argv(out)) == 0
                trees.append(_tree(out))
            same[name] = trees[0] == trees[1] and bool(trees[0])
        d = rng.uniform(0, 1e4, (37, 53)).astype(np.float32)
        io.write_pfm(tmp / "d.pfm", d)
        pfm = io.read_pfm_array(tmp / "d.pfm").tobytes() == d.tobytes()
        bits = rng.random((37, 53)) < 0.5
        io.write_pgm(tmp / "m.pgm", ShaftMask(bits))
        pgm = np.array_equal(io.read_pgm(tmp / "m.pgm").bits, bits)
    ok = all(same.values()) and pfm and pgm
    bad = [k for k, v in same.items() if not v]
    return ok, f"rerun identical for {len(same) - len(bad)}/{len(same)} commands, PFM {pfm}, PGM {pgm}"


def check_10():
    """Single-frame cmd_recover on a 640x512 frame in under 100 ms."""
    cfg = PipelineConfig()
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cli.cmd_synth(cfg, tmp, frames=1)
        args = (cfg, tmp / "relative/frame_0000.pfm", tmp / "mask/frame_0000_tool0.pgm", tmp / "o.pfm")
        rec = cli.cmd_recover(*args)[0]
        times = []
        for _ in range(5):
            t0 = time.perf_counter()
            cli.cmd_recover(*args)
            times.append(time.perf_counter() - t0)
    ms = 1000 * float(np.median(times))
    ok = rec["status"] == "ok" and ms < 100
    return ok, f"median {ms:.1f} ms over 5 runs (status {rec['status']})"


CHECKS = [check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8, check_9, check_10]


@pytest.mark.parametrize("n", range(1, 11))
def test_criterion(n, capsys):
    ok, detail = CHECKS[n - 1]()
    with capsys.disabled():
        print()
        report(n, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    results = [report(n, *CHECKS[n - 1]()) for n in range(1, 11)]
    print(f"{sum(results)}/10 criteria pass")
    sys.exit(0 if all(results) else 1)
