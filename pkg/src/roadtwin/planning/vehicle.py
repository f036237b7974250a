"""Vehicle geometry, poses, paths and the wheel-level collision test."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import FREE

EDGE_SPACING = 0.1


@dataclass(frozen=True)
class VehicleModel:
    width: float = 2.0
    wheelbase: float = 3.0
    wheel_radius: float = 0.15

    def __post_init__(self):
        if not (self.width > 0 and self.wheelbase > 0 and self.wheel_radius > 0):
            raise ValueError("vehicle dimensions must be positive")


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    w = np.mod(a + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.yaw)):
            raise ValueError("pose must be finite")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def as_array(self):
        return np.array([self.x, self.y, self.yaw])


@dataclass
class Path:
    """Planner output. ``kind`` says how to read headings between poses:
    "polyline" uses each segment's direction, "pose" interpolates yaw."""

    poses: np.ndarray
    planner: str
    params: dict = field(default_factory=dict)
    kind: str = "polyline"

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=np.float64).reshape(-1, 3)

    def __len__(self):
        return len(self.poses)

    def length(self):
        d = np.diff(self.poses[:, :2], axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).sum())


class UnreachableError(RuntimeError):
    pass


def wheel_poses(pose, vehicle=VehicleModel()):
    """Wheel centres (rear-left, rear-right, front-left, front-right) for one
    pose or an (n, 3) array of poses; returns (4, 2) or (n, 4, 2)."""
    p = pose.as_array() if isinstance(pose, Pose) else np.asarray(pose, dtype=np.float64)
    single = p.ndim == 1
    p = p.reshape(-1, 3)
    h = vehicle.width / 2.0
    local = np.array([[0.0, h], [0.0, -h], [vehicle.wheelbase, h], [vehicle.wheelbase, -h]])
    c, s = np.cos(p[:, 2]), np.sin(p[:, 2])
    x = p[:, None, 0] + c[:, None] * local[:, 0] - s[:, None] * local[:, 1]
    y = p[:, None, 1] + s[:, None] * local[:, 0] + c[:, None] * local[:, 1]
    out = np.stack([x, y], axis=-1)
    return out[0] if single else out


def poses_free(poses, grid, vehicle=VehicleModel()):
    """Vectorised collision_free over an (n, 3) pose array."""
    p = np.asarray(poses, dtype=np.float64).reshape(-1, 3)
    if len(p) == 0:
        return np.zeros(0, dtype=bool)
    w = wheel_poses(p, vehicle).reshape(-1, 2)
    ok = grid.state_at(w) == FREE
    if ok.any():
        ok[ok] = grid.defect_distance(w[ok]) > vehicle.wheel_radius
    return ok.reshape(-1, 4).all(axis=1)


def collision_free(pose, grid, vehicle=VehicleModel()):
    """Every wheel centre on a free cell and no defect cell centre inside any
    wheel disc. The body between the wheels is not checked."""
    p = pose.as_array() if isinstance(pose, Pose) else np.asarray(pose, dtype=np.float64)
    return bool(poses_free(p[None], grid, vehicle)[0])


def _count(d, spacing):
    return max(1, int(math.ceil(d / spacing - 1e-9)))


def segment_poses(a, b, spacing=EDGE_SPACING):
    """Straight move a->b sampled at <= spacing, both ends included, heading
    along the move."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = math.hypot(b[0] - a[0], b[1] - a[1])
    n = _count(d, spacing)
    t = np.linspace(0.0, 1.0, n + 1)
    yaw = math.atan2(b[1] - a[1], b[0] - a[0]) if d > 0 else (a[2] if len(a) > 2 else 0.0)
    xy = a[None, :2] + t[:, None] * (b[:2] - a[:2])[None]
    return np.c_[xy, np.full(len(t), yaw)]


def interpolate_poses(a, b, spacing=EDGE_SPACING):
    """Pose a->b sampled at <= spacing with linear position and shortest-arc yaw."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = math.hypot(b[0] - a[0], b[1] - a[1])
    n = _count(d, spacing)
    t = np.linspace(0.0, 1.0, n + 1)
    dyaw = wrap_angle(b[2] - a[2])
    xy = a[None, :2] + t[:, None] * (b[:2] - a[:2])[None]
    return np.c_[xy, wrap_angle(a[2] + t * dyaw)]


def replay_poses(path, spacing=EDGE_SPACING):
    """Dense pose sequence used to verify a path, per its ``kind``."""
    P = path.poses
    if len(P) == 1:
        return P.copy()
    step = segment_poses if path.kind == "polyline" else interpolate_poses
    return np.vstack([step(P[k], P[k + 1], spacing) for k in range(len(P) - 1)])


def path_collision_free(path, grid, vehicle=VehicleModel(), spacing=EDGE_SPACING):
    return bool(poses_free(replay_poses(path, spacing), grid, vehicle).all())
