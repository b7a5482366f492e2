"""File formats: PFM depth maps, binary PGM masks, JSON-lines records.

PFM payloads are little-endian float32, rows stored bottom to top (the
format's convention). Values that are exactly representable in float32
round-trip bit for bit.
"""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .errors import IoError
from .geometry import CylinderAxis, ImageLine, Pixel, Point3
from .maps import DepthMap, ShaftMask, Unit
from .pose import ShaftObservation, ToolPose

MANIFEST_SCHEMA = "endoscale.manifest/1"
RECORDS_SCHEMA = "endoscale.records/1"
REPORT_SCHEMA = "endoscale.report/1"


def write_pfm(path, depth):
    path = Path(path)
    values = depth.values if isinstance(depth, DepthMap) else np.asarray(depth)
    h, w = values.shape
    payload = np.flipud(values).astype("<f4").tobytes()
    try:
        with open(path, "wb") as f:
            f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
            f.write(payload)
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from exc


def read_pfm_array(path):
    """Float32 array ``(h, w)`` from a grayscale PFM file."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from exc
    m = re.match(rb"(P[Ff])\s+(\d+)\s+(\d+)\s+(\S+)\s", data)
    if not m:
        raise IoError(path, "not a PFM file")
    tag, w, h, scale = m.group(1), int(m.group(2)), int(m.group(3)), float(m.group(4))
    if tag != b"Pf":
        raise IoError(path, "colour PFM is not a depth map")
    dtype = "<f4" if scale < 0 else ">f4"
    body = data[m.end():]
    if len(body) != 4 * w * h:
        raise IoError(path, f"payload has {len(body)} bytes, expected {4 * w * h}")
    return np.flipud(np.frombuffer(body, dtype=dtype).reshape(h, w)).astype(np.float32)


def read_pfm(path, unit=Unit.RELATIVE):
    return DepthMap(read_pfm_array(path).astype(np.float64), Unit(unit))


def write_pgm(path, mask):
    path = Path(path)
    bits = mask.bits if isinstance(mask, ShaftMask) else np.asarray(mask, bool)
    h, w = bits.shape
    try:
        with open(path, "wb") as f:
            f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            f.write(np.where(bits, 255, 0).astype(np.uint8).tobytes())
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from exc


def read_pgm(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from exc
    # header tokens may be separated by comments
    tokens, pos = [], 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)").match(data, pos)
        if not m:
            raise IoError(path, "truncated PGM header")
        tokens.append(m.group(2))
        pos = m.end()
    if tokens[0] != b"P5":
        raise IoError(path, "not a binary PGM (P5) file")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise IoError(path, "16-bit PGM masks are not supported")
    body = data[pos + 1: pos + 1 + w * h]
    if len(body) != w * h:
        raise IoError(path, "PGM payload is truncated")
    return ShaftMask(np.frombuffer(body, dtype=np.uint8).reshape(h, w) > 0)


def dumps(record):
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=True)


def write_jsonl(path, header, records):
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(dumps(header) + "\n")
            for r in records:
                f.write(dumps(r) + "\n")
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from exc


def read_jsonl(path, schema=None):
    """Return ``(header, records)``; checks the header's schema tag when given."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from exc
    if not lines:
        raise IoError(path, "empty record file")
    try:
        header = json.loads(lines[0])
        records = [json.loads(x) for x in lines[1:] if x.strip()]
    except json.JSONDecodeError as exc:
        raise IoError(path, f"malformed JSON line: {exc}") from exc
    if schema is not None and header.get("schema") != schema:
        raise IoError(path, f"expected schema {schema}, found {header.get('schema')}")
    return header, records


# ---- record encoders -------------------------------------------------------

def encode_line(line):
    return [line.a, line.b, line.c]


def encode_axis(axis):
    return {"s": [float(x) for x in axis.s], "m": [float(x) for x in axis.m], "r_s": axis.r_s}


def decode_axis(d):
    return CylinderAxis(np.array(d["s"]), np.array(d["m"]), d["r_s"])


def encode_pose(pose):
    return {"axis": encode_axis(pose.axis), "tip": [float(x) for x in pose.tip_point]}


def decode_pose(d):
    return ToolPose(decode_axis(d["axis"]), Point3(*d["tip"]))


def encode_observation(obs):
    return {"line_minus": encode_line(obs.line_minus), "line_plus": encode_line(obs.line_plus),
            "tip": [obs.tip.u, obs.tip.v], "quality": obs.quality}


def decode_observation(d):
    return ShaftObservation(ImageLine(*d["line_minus"]), ImageLine(*d["line_plus"]),
                            Pixel(*d["tip"]), d.get("quality", 1.0))
