"""Per-command run configuration: JSON file plus ``key=value`` overrides."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


def _positive(name, v):
    if not (isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 and math.isfinite(v)):
        raise ConfigError(f"{name} must be a positive number, got {v!r}")


def _nonneg(name, v):
    if not (isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0 and math.isfinite(v)):
        raise ConfigError(f"{name} must be a non-negative number, got {v!r}")


def _int_at_least(name, v, lo):
    if not (isinstance(v, int) and not isinstance(v, bool) and v >= lo):
        raise ConfigError(f"{name} must be an integer >= {lo}, got {v!r}")


def _choice(name, v, options):
    if v not in options:
        raise ConfigError(f"{name} must be one of {', '.join(map(str, options))}; got {v!r}")


def _point(name, v, n=2):
    if not (isinstance(v, (list, tuple)) and len(v) == n
            and all(isinstance(x, (int, float)) and math.isfinite(x) for x in v)):
        raise ConfigError(f"{name} must be a list of {n} numbers, got {v!r}")


@dataclass
class SurfaceConfig:
    clouds: list = field(default_factory=list)  # PLY paths
    masks: list = field(default_factory=list)  # [{"mask": pgm, "projection": 3x4}] per cloud
    leaf: float = 0.5
    level: bool = True
    inlier_tol: float = 0.02
    name: str = "surface"

    def check(self):
        if not self.clouds:
            raise ConfigError("clouds must list at least one PLY file")
        if self.masks and len(self.masks) != len(self.clouds):
            raise ConfigError("masks must be empty or give one entry per cloud")
        _positive("leaf", self.leaf)
        _positive("inlier_tol", self.inlier_tol)


@dataclass
class DefectConfig:
    elevation: str = ""  # 16-bit PGM with JSON sidecar
    depth_threshold: float = -0.015
    min_area: float = 0.0
    stride: int = 3
    allow_bumps: bool = False
    prefix: str = "defect"

    def check(self):
        if not self.elevation:
            raise ConfigError("elevation must name an elevation map PGM")
        if not (isinstance(self.depth_threshold, (int, float)) and self.depth_threshold < 0):
            raise ConfigError("depth_threshold must be negative")
        _nonneg("min_area", self.min_area)
        _int_at_least("stride", self.stride, 1)


@dataclass
class LibraryConfig:
    library: str = ""
    source: str = ""  # library to copy entries from (add)
    names: list = field(default_factory=list)  # empty = every entry of source

    def check(self):
        if not self.library:
            raise ConfigError("library must name a library directory")


@dataclass
class SceneConfig:
    segments: str = "desk"  # "desk" or a JSON file of rectangles
    library: str = "desk"  # "desk" or a library directory
    surface: str = "surface"  # surface entry name in the library
    count: int = 50
    scale_min: float = 0.5
    scale_max: float = 1.5
    yaw_min: float = 0.0
    yaw_max: float = 2 * math.pi
    max_attempts: int = 200
    confirm_rays: bool = True
    validate: bool = True
    threads: int = 1

    def check(self):
        _int_at_least("count", self.count, 0)
        _positive("scale_min", self.scale_min)
        _positive("scale_max", self.scale_max)
        if self.scale_max < self.scale_min:
            raise ConfigError("scale_max must be >= scale_min")
        if self.yaw_max < self.yaw_min:
            raise ConfigError("yaw_max must be >= yaw_min")
        _int_at_least("max_attempts", self.max_attempts, 1)
        _int_at_least("threads", self.threads, 0)


@dataclass
class ValidateConfig:
    scene: str = ""

    def check(self):
        if not self.scene:
            raise ConfigError("scene must name a generated scene directory")


@dataclass
class RasterizeConfig:
    scenario: str = ""  # scenario JSON; empty = bundled
    scene: str = ""  # generated scene directory (overrides scenario)
    resolution: float = 0.2
    margin: float = 0.0

    def check(self):
        _positive("resolution", self.resolution)
        _nonneg("margin", self.margin)


PLANNER_CHOICES = ("all", "astar", "rrtstar", "lattice", "hybrid_astar")


@dataclass
class PlanConfig:
    scenario: str = ""
    planner: str = "all"
    rrtstar_iters: int = 5000
    svg: bool = True

    def check(self):
        _choice("planner", self.planner, PLANNER_CHOICES)
        _int_at_least("rrtstar_iters", self.rrtstar_iters, 1)


@dataclass
class VibrationConfig:
    speeds: list = field(default_factory=lambda: [5, 10, 20, 30, 40])
    alpha: float = 0.1
    model: str = "quarter_car"
    frequency: float = 1.5
    damping: float = 0.1
    ds: float = 0.01
    defects: list = field(default_factory=lambda: [
        {"id": "deep", "depth": 0.12, "length": 1.5},
        {"id": "shallow", "depth": 0.03, "length": 0.3},
    ])
    scene: str = ""  # generated scene directory; drives start -> end instead of test pits
    start: list = field(default_factory=list)
    end: list = field(default_factory=list)

    def check(self):
        if not isinstance(self.speeds, list) or not self.speeds:
            raise ConfigError("speeds must be a nonempty list")
        for v in self.speeds:
            _positive("speed", v)
        _nonneg("alpha", self.alpha)
        _choice("model", self.model, ("quarter_car", "kinematic"))
        _positive("frequency", self.frequency)
        _nonneg("damping", self.damping)
        _positive("ds", self.ds)
        if self.scene:
            _point("start", self.start)
            _point("end", self.end)
        else:
            if not self.defects:
                raise ConfigError("defects must list at least one test pit")
            for d in self.defects:
                if not isinstance(d, dict) or set(d) - {"id", "depth", "length", "width"}:
                    raise ConfigError(f"bad test pit entry {d!r}")
                _nonneg("depth", d.get("depth"))
                _positive("length", d.get("length"))


COMMAND_CONFIGS = {
    "reconstruct-surface": SurfaceConfig,
    "reconstruct-defect": DefectConfig,
    "library": LibraryConfig,
    "generate-scene": SceneConfig,
    "validate": ValidateConfig,
    "rasterize": RasterizeConfig,
    "plan": PlanConfig,
    "vibration-sweep": VibrationConfig,
}


def parse_value(text):
    """JSON literal if it parses, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _coerce(cls, key, value):
    kind = {x.name: x.type for x in fields(cls)}[key]
    if kind == "bool" and not isinstance(value, bool):
        raise ConfigError(f"{key} must be true or false, got {value!r}")
    if kind == "str" and not isinstance(value, str):
        raise ConfigError(f"{key} must be a string, got {value!r}")
    if kind == "list" and not isinstance(value, list):
        raise ConfigError(f"{key} must be a list, got {value!r}")
    if kind == "float" and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    return value


def build_config(command, path=None, overrides=()):
    """Load the config record for ``command`` from an optional JSON file and
    ``key=value`` overrides; unknown keys and out-of-range values raise."""
    cls = COMMAND_CONFIGS[command]
    data = {}
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        data[k.strip()] = parse_value(v)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {command} config keys: {', '.join(unknown)}")
    cfg = cls(**{k: _coerce(cls, k, v) for k, v in data.items()})
    cfg.check()
    return cfg


def config_dict(cfg):
    return asdict(cfg)
