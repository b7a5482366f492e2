"""Command-line entry point: ``endoscale synth | fuse | recover | eval | pose-bench``.

Exit codes: 0 success, 1 usage/config error, 2 data or I/O error, 3 internal error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import io
from .config import load_config
from .errors import ConfigError, DataError, EndoscaleError, FrameRejected, IoError, MismatchedFrameSets
from .evaluation import aggregate, depth_metrics, median_rescaled
from .fusion import fuse_multires
from .geometry import CameraIntrinsics
from .maps import DepthMap, Unit
from .scale import apply_scale, recover_frame
from .synthetic import (
    analytic_observation,
    make_relative,
    monte_carlo_pose,
    perturb_observation,
    random_scene,
    render,
    trial_rng,
)

log = logging.getLogger("endoscale")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

POSE_COLUMNS = [
    ("ori_x_deg", "Ori X (deg)"),
    ("ori_y_deg", "Ori Y (deg)"),
    ("tip_x_mm", "Tip X (mm)"),
    ("tip_y_mm", "Tip Y (mm)"),
    ("tip_z_mm", "Tip Z (mm)"),
]
DEPTH_COLUMNS = [
    ("abs_rel", "Abs Rel"),
    ("sq_rel", "Sq Rel"),
    ("rmse", "RMSE"),
    ("rmse_log", "RMSE log"),
    ("mae", "MAE"),
    ("delta_125", "d<1.25"),
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _check_outputs(outputs, inputs):
    ins = {Path(p).resolve() for p in inputs}
    for o in outputs:
        if Path(o).resolve() in ins:
            raise ConfigError(f"output path {o} would overwrite an input")


def _map_jobs(fn, items, jobs):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _fmt(mean_std):
    m, s = mean_std
    return f"{m:.3f}±{s:.3f}"


def _table(title, columns, summary, extra=()):
    head = [name for _, name in columns] + [name for name, _ in extra]
    row = [_fmt(summary[key]) for key, _ in columns] + [val for _, val in extra]
    widths = [max(len(h), len(r)) for h, r in zip(head, row)]
    lines = [title,
             " | ".join(h.rjust(w) for h, w in zip(head, widths)),
             "-+-".join("-" * w for w in widths),
             " | ".join(r.rjust(w) for r, w in zip(row, widths))]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- commands

def synth_frame(cfg, index):
    """One synthetic frame: ``(record, gt, relative, mask)``, a pure function of (cfg, index).

    The ground truth is rounded to float32 first so the in-memory maps equal
    what the PFM files hold.
    """
    sc = cfg.synth
    rng = trial_rng(cfg.seed, index)
    spec = random_scene(rng, cfg.camera, cfg.shaft_radius_mm, sc.depth_range, sc.z_bg)
    gt, mask = render(spec)
    gt = DepthMap(gt.values.astype(np.float32).astype(np.float64), Unit.MILLIMETERS)
    eta = float(rng.uniform(*sc.eta_range))
    gamma = float(rng.uniform(*sc.gamma_range))
    noise = replace(sc.noise, seed=int(rng.integers(2 ** 63)))
    rel = make_relative(gt, eta, gamma, noise)
    rel = rel.with_values(rel.values.astype(np.float32).astype(np.float64))
    obs = perturb_observation(analytic_observation(spec), noise, rng)
    name = f"frame_{index:04d}"
    record = {"frame": name, "tool": 0, "gt": f"gt/{name}.pfm",
              "relative": f"relative/{name}.pfm", "mask": f"mask/{name}_tool0.pgm",
              "eta": eta, "gamma": gamma, "pose": io.encode_pose(spec.pose),
              "observation": io.encode_observation(obs), "z_bg": spec.z_bg}
    return record, gt, rel, mask


def cmd_synth(cfg, out_dir, frames=None):
    """Render a synthetic dataset with ground truth, relative depth, masks and a manifest."""
    out = Path(out_dir)
    for sub in ("gt", "relative", "mask"):
        try:
            (out / sub).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoError(out / sub, exc.strerror or str(exc)) from exc
    n = cfg.synth.frames if frames is None else frames
    records = []
    for i in range(n):
        record, gt, rel, mask = synth_frame(cfg, i)
        io.write_pfm(out / record["gt"], gt)
        io.write_pfm(out / record["relative"], rel)
        io.write_pgm(out / record["mask"], mask)
        records.append(record)
    header = {"schema": io.MANIFEST_SCHEMA, "frames": n, "seed": cfg.seed,
              "intrinsics": cfg.camera.to_dict(), "shaft_radius_mm": cfg.shaft_radius_mm}
    io.write_jsonl(out / "manifest.jsonl", header, records)
    log.info("wrote %d frames to %s", n, out)
    return records


def cmd_fuse(cfg, low_path, high_path, out_path):
    _check_outputs([out_path], [low_path, high_path])
    low = io.read_pfm(low_path)
    high = io.read_pfm(high_path)
    fused = fuse_multires(low, high, cfg.fusion)
    io.write_pfm(out_path, fused)
    if fused.n_clamped:
        log.warning("clamped %d negative fused depths to zero", fused.n_clamped)
    return fused


def _scale_record(p):
    return {"eta": p.eta, "gamma": p.gamma, "n_samples": p.n_samples, "residual_rms": p.residual_rms}


def _relative_to(path, records_path):
    """Depth paths in records are relative to the records file, so output trees can move."""
    return Path(os.path.relpath(Path(path).resolve(), Path(records_path).resolve().parent)).as_posix()


def _recover_one(cfg, K, rel_path, mask_path, out_path, observation=None):
    """Returns ``(record, absolute or None, ScaleParams or None, relative)``."""
    rel = io.read_pfm(rel_path)
    mask = io.read_pgm(mask_path)
    try:
        absolute, pose, params = recover_frame(rel, mask, K, cfg.shaft_radius_mm, cfg.recovery,
                                               observation=observation)
    except FrameRejected as exc:
        return {"status": "rejected", "reason": exc.reason, "detail": exc.detail}, None, None, rel
    io.write_pfm(out_path, absolute)
    return ({"status": "ok", "scale": _scale_record(params), "pose": io.encode_pose(pose),
             "n_clamped": absolute.n_clamped, "depth": str(out_path)}, absolute, params, rel)


def cmd_recover(cfg, rel_path=None, mask_path=None, out=None, manifest=None, records_path=None,
                primitives="mask", jobs=1):
    """Metric depth for one frame, or for every frame listed in a manifest.

    With ``manifest``, ``out`` is a directory receiving ``<frame>.pfm`` files and
    (unless ``records_path`` is given) ``records.jsonl``. ``primitives="manifest"``
    takes the shaft observation from the manifest instead of the mask.
    """
    K = cfg.camera
    if manifest is None:
        if rel_path is None or mask_path is None or out is None:
            raise ConfigError("recover needs RELATIVE and MASK paths and --out")
        _check_outputs([out], [rel_path, mask_path])
        rec = _recover_one(cfg, K, rel_path, mask_path, out)[0]
        rec = {"frame": Path(rel_path).stem, **rec}
        if records_path:
            if "depth" in rec:
                rec["depth"] = _relative_to(rec["depth"], records_path)
            io.write_jsonl(records_path, {"schema": io.RECORDS_SCHEMA}, [rec])
        return [rec]

    mpath = Path(manifest)
    base = mpath.parent
    _, frames = io.read_jsonl(mpath, io.MANIFEST_SCHEMA)
    out_dir = Path(out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(out_dir, exc.strerror or str(exc)) from exc

    def run(fr):
        obs = io.decode_observation(fr["observation"]) if primitives == "manifest" else None
        k = CameraIntrinsics(**fr["intrinsics"]) if "intrinsics" in fr else K
        return _recover_one(cfg, k, base / fr["relative"], base / fr["mask"],
                            out_dir / f"{fr['frame']}.pfm", obs)

    if cfg.fallback_scale:
        # each frame may depend on its predecessor's fit: strictly ordered
        results, prev, prev_name = [], None, None
        for fr in frames:
            rec, absolute, params, rel = run(fr)
            if rec["status"] == "rejected" and prev is not None:
                absolute = apply_scale(rel, prev)
                io.write_pfm(out_dir / f"{fr['frame']}.pfm", absolute)
                rec = {"status": "fallback", "fallback_reason": rec["reason"],
                       "fallback_from": prev_name, "scale": _scale_record(prev),
                       "n_clamped": absolute.n_clamped, "depth": str(out_dir / f"{fr['frame']}.pfm")}
            elif rec["status"] == "ok":
                prev, prev_name = params, fr["frame"]
            results.append((rec, absolute))
    else:
        results = [(r[0], r[1]) for r in _map_jobs(run, frames, jobs)]

    records_path = records_path or out_dir / "records.jsonl"
    records = []
    for fr, (rec, absolute) in zip(frames, results):
        rec = {"frame": fr["frame"], **rec}
        if "depth" in rec:
            rec["depth"] = _relative_to(rec["depth"], records_path)
        if absolute is not None and "gt" in fr:
            gt = io.read_pfm(base / fr["gt"], Unit.MILLIMETERS)
            rec["metrics"] = asdict(depth_metrics(absolute, gt))
        records.append(rec)
    io.write_jsonl(records_path, {"schema": io.RECORDS_SCHEMA}, records)
    return records


def cmd_eval(cfg, pred_dir, gt_dir, out_path, jobs=1):
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    preds = {p.name for p in pred_dir.glob("*.pfm")}
    gts = {p.name for p in gt_dir.glob("*.pfm")}
    if not gts:
        raise MismatchedFrameSets(f"no ground-truth frames in {gt_dir}")
    if preds != gts:
        missing = sorted(gts - preds)[:5]
        extra = sorted(preds - gts)[:5]
        raise MismatchedFrameSets(f"frame sets differ (missing {missing}, unexpected {extra})")
    names = sorted(gts)

    def run(name):
        pred = io.read_pfm(pred_dir / name, Unit.MILLIMETERS)
        gt = io.read_pfm(gt_dir / name, Unit.MILLIMETERS)
        raw = depth_metrics(pred, gt)
        rescaled, factor = median_rescaled(pred, gt)
        return {"frame": Path(name).stem, "raw": asdict(raw),
                "rescaled": asdict(depth_metrics(rescaled, gt)), "scale": factor}

    frames = _map_jobs(run, names, jobs)
    summary = {}
    for variant in ("raw", "rescaled"):
        summary[variant] = {}
        for k in frames[0][variant]:
            col = np.array([r[variant][k] for r in frames], dtype=float)
            summary[variant][k] = [float(col.mean()), float(col.std())]
    scales = np.array([r["scale"] for r in frames])
    summary["scale"] = [float(scales.mean()), float(scales.std())]

    header = {"schema": io.REPORT_SCHEMA, "kind": "eval", "std": "population", "frames": len(frames)}
    io.write_jsonl(out_path, header, frames + [{"aggregate": summary}])
    text = ""
    for variant in ("raw", "rescaled"):
        text += _table(f"Depth metrics ({variant}, mean±std over {len(frames)} frames)",
                       DEPTH_COLUMNS, summary[variant],
                       extra=[("Scale", _fmt(summary["scale"]))])
    Path(out_path).with_suffix(".txt").write_text(text, encoding="utf-8")
    return frames, summary, text


def cmd_pose_bench(cfg, out_path, trials=None):
    bc = cfg.bench
    n = bc.trials if trials is None else trials
    errors, rejected = monte_carlo_pose(n, bc.noise, cfg.seed, cfg.camera, cfg.shaft_radius_mm,
                                        bc.depth_range)
    header = {"schema": io.REPORT_SCHEMA, "kind": "pose-bench", "std": "population",
              "trials": n, "seed": cfg.seed, "noise": asdict(bc.noise)}
    recs = [{"trial": i, **asdict(e)} for i, e in
            zip([t for t in range(n) if t not in rejected], errors)]
    recs += [{"trial": i, "rejected": reason} for i, reason in sorted(rejected.items())]
    summary = aggregate(errors) if errors else {}
    io.write_jsonl(out_path, header, recs + [{"aggregate": summary, "rejected": len(rejected)}])
    text = _table(f"Instrument pose errors (mean±std over {len(errors)} trials)", POSE_COLUMNS,
                  summary, extra=[("Rejected", str(len(rejected)))]) if errors else "no successful trials\n"
    Path(out_path).with_suffix(".txt").write_text(text, encoding="utf-8")
    return errors, rejected, text


# ------------------------------------------------------------------- main

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (overridden by $ENDOSCALE_CONFIG)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--jobs", type=int, default=1, help="frame-parallel workers")
    common.add_argument("--intrinsics-scale", type=float,
                        help="resize factor applied to the configured intrinsics")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="endoscale", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="render a synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--frames", type=int)

    f = sub.add_parser("fuse", parents=[common], help="fuse low/high resolution relative depth")
    f.add_argument("low")
    f.add_argument("high")
    f.add_argument("--out", required=True)
    f.add_argument("--radius", type=int)
    f.add_argument("--epsilon", type=float)
    f.add_argument("--inverse-depth", action="store_true", help="filter in inverse depth")

    r = sub.add_parser("recover", parents=[common], help="recover metric depth")
    r.add_argument("relative", nargs="?")
    r.add_argument("mask", nargs="?")
    r.add_argument("--out", required=True, help="output PFM (single frame) or directory (--manifest)")
    r.add_argument("--manifest")
    r.add_argument("--records")
    r.add_argument("--primitives", choices=["mask", "manifest"], default="mask")
    r.add_argument("--fallback-scale", action="store_true")

    e = sub.add_parser("eval", parents=[common], help="depth metrics against ground truth")
    e.add_argument("pred_dir")
    e.add_argument("gt_dir")
    e.add_argument("--out", required=True)

    b = sub.add_parser("pose-bench", parents=[common], help="Monte-Carlo pose error benchmark")
    b.add_argument("--out", required=True)
    b.add_argument("--trials", type=int)
    return p


def _apply_overrides(cfg, args):
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.intrinsics_scale is not None:
        kw["intrinsics_scale"] = args.intrinsics_scale
    if getattr(args, "fallback_scale", False):
        kw["fallback_scale"] = True
    fusion = {}
    if getattr(args, "radius", None) is not None:
        fusion["filter_radius"] = args.radius
    if getattr(args, "epsilon", None) is not None:
        fusion["epsilon"] = args.epsilon
    if getattr(args, "inverse_depth", False):
        fusion["domain"] = "inverse"
    if fusion:
        kw["fusion"] = replace(cfg.fusion, **fusion)
    return replace(cfg, **kw) if kw else cfg


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    cfg = _apply_overrides(load_config(args.config), args)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    if args.command == "synth":
        cmd_synth(cfg, args.out, args.frames)
    elif args.command == "fuse":
        cmd_fuse(cfg, args.low, args.high, args.out)
    elif args.command == "recover":
        cmd_recover(cfg, args.relative, args.mask, args.out, args.manifest, args.records,
                    args.primitives, args.jobs)
    elif args.command == "eval":
        _, _, text = cmd_eval(cfg, args.pred_dir, args.gt_dir, args.out, args.jobs)
        sys.stdout.write(text)
    elif args.command == "pose-bench":
        _, _, text = cmd_pose_bench(cfg, args.out, args.trials)
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None):
    try:
        return run(argv)
    except ConfigError as exc:
        print(f"endoscale: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, IoError) as exc:
        print(f"endoscale: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EndoscaleError as exc:
        print(f"endoscale: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - stable exit code for harnesses
        print(f"endoscale: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
