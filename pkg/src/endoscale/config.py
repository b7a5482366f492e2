"""Pipeline configuration (JSON file, every key optional).

Example::

    {
      "schema": "endoscale.config/1",
      "intrinsics": {"fx": 500, "fy": 500, "cx": 320, "cy": 256, "width": 640, "height": 512},
      "intrinsics_scale": 1.0,
      "shaft_radius_mm": 4.5,
      "fusion": {"filter_radius": 8, "epsilon": 1e-4, "low_res": [320, 256], "high_res": [480, 384]},
      "recovery": {"stride": 5, "min_samples": 10, "min_quality": 0.6},
      "fallback_scale": false,
      "seed": 0
    }
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError, IoError
from .fusion import FusionConfig
from .geometry import CameraIntrinsics
from .scale import RecoveryConfig
from .synthetic import DEFAULT_RADIUS, DEFAULT_Z_BG, NoiseSpec

CONFIG_SCHEMA = "endoscale.config/1"
CONFIG_ENV = "ENDOSCALE_CONFIG"


@dataclass(frozen=True)
class SynthConfig:
    frames: int = 5
    depth_range: tuple = (20.0, 120.0)
    z_bg: float = DEFAULT_Z_BG
    eta_range: tuple = (0.01, 0.05)
    gamma_range: tuple = (0.0, 0.5)
    noise: NoiseSpec = NoiseSpec()


@dataclass(frozen=True)
class BenchConfig:
    trials: int = 200
    depth_range: tuple = (20.0, 150.0)
    noise: NoiseSpec = NoiseSpec(boundary_angle_deg=0.1, boundary_offset_px=1.0, tip_px_sigma=1.0)


@dataclass(frozen=True)
class PipelineConfig:
    intrinsics: CameraIntrinsics = CameraIntrinsics(500.0, 500.0, 320.0, 256.0, 640, 512)
    intrinsics_scale: float = 1.0
    shaft_radius_mm: float = DEFAULT_RADIUS
    fusion: FusionConfig = FusionConfig()
    recovery: RecoveryConfig = RecoveryConfig()
    fallback_scale: bool = False
    seed: int = 0
    synth: SynthConfig = SynthConfig()
    bench: BenchConfig = BenchConfig()

    def __post_init__(self):
        if not self.shaft_radius_mm > 0:
            raise ConfigError("shaft_radius_mm must be positive")
        if not self.intrinsics_scale > 0:
            raise ConfigError("intrinsics_scale must be positive")

    @property
    def camera(self):
        """Intrinsics after the explicit ``intrinsics_scale`` resize factor."""
        if self.intrinsics_scale == 1.0:
            return self.intrinsics
        return self.intrinsics.scaled(self.intrinsics_scale)

    def to_dict(self):
        d = asdict(self)
        d["schema"] = CONFIG_SCHEMA
        return d


_NESTED = {
    "intrinsics": CameraIntrinsics,
    "fusion": FusionConfig,
    "recovery": RecoveryConfig,
    "synth": SynthConfig,
    "bench": BenchConfig,
    "noise": NoiseSpec,
}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known - {"schema"}
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    kw = {}
    for k, v in data.items():
        if k == "schema":
            continue
        if k in _NESTED:
            v = _build(_NESTED[k], v, f"{where}.{k}")
        elif isinstance(v, list):
            v = tuple(v)
        kw[k] = v
    try:
        return cls(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(data):
    if "schema" in data and data["schema"] != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported config schema {data['schema']!r}")
    return _build(PipelineConfig, data, "config")


def load_config(path=None):
    """Load a config file; ``$ENDOSCALE_CONFIG`` overrides ``path``; no path gives defaults."""
    path = os.environ.get(CONFIG_ENV) or path
    if not path:
        return PipelineConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(data)
