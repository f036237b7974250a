"""Path deviation, smoothness and wheel clearance."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .vehicle import VehicleModel, wheel_poses, wrap_angle

RESAMPLE = 0.5


@dataclass(frozen=True)
class PathMetrics:
    deviation: float  # percent
    smoothness: float  # rad/m
    clearance: float  # m
    clearance_capped: bool = False

    def to_dict(self):
        return asdict(self)


def resample(path, step=RESAMPLE):
    """Poses at uniform arc length ``step`` (endpoint always included).

    Heading comes from the containing segment for polyline paths and from
    interpolated yaw for pose paths.
    """
    P = path.poses
    seg = np.hypot(*np.diff(P[:, :2], axis=0).T)
    keep = np.r_[True, seg > 0]
    P = P[keep]
    seg = seg[seg > 0]
    if len(P) < 2:
        raise ValueError("path has zero length")
    s = np.r_[0.0, np.cumsum(seg)]
    L = s[-1]
    t = np.arange(0.0, L, step)
    t = np.r_[t[:-1], L] if L - t[-1] < 1e-9 * max(1.0, L) else np.r_[t, L]
    x = np.interp(t, s, P[:, 0])
    y = np.interp(t, s, P[:, 1])
    if path.kind == "polyline":
        k = np.clip(np.searchsorted(s, t, side="right") - 1, 0, len(seg) - 1)
        d = np.diff(P[:, :2], axis=0)
        yaw = np.arctan2(d[:, 1], d[:, 0])[k]
    else:
        yaw = wrap_angle(np.interp(t, s, np.unwrap(P[:, 2])))
    return np.c_[x, y, yaw], float(L)


def evaluate_path(path, grid, vehicle=VehicleModel(), reference_length=None):
    if len(path) < 2:
        raise ValueError("evaluate_path needs at least two poses")
    if reference_length is None or not reference_length > 0:
        raise ValueError("reference length must be positive")
    R, L = resample(path)
    deviation = 100.0 * (L - reference_length) / reference_length
    smooth = float(np.abs(wrap_angle(np.diff(R[:, 2]))).sum()) / L
    if len(grid.defect_centers()) == 0:
        return PathMetrics(deviation, smooth, grid.diagonal, True)
    w = wheel_poses(R, vehicle).reshape(-1, 2)
    dmin = grid.defect_distance(w).reshape(-1, 4).min(axis=1)
    return PathMetrics(deviation, smooth, float(dmin.mean()), False)
