"""Constant-speed traversal over defects and the composite vibration degree.

Wheels follow the ground except that descent is limited by free fall;
landing resets the vertical velocity and records an impact impulse. Body
signals come from a per-corner quarter-car filter by default, or directly
from wheel heights when ``suspension`` is None.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import PARALLEL_EPS
from .mesh import GeometryError, TriMesh
from .planning.vehicle import VehicleModel

log = logging.getLogger(__name__)

GRAVITY = 9.81
ALPHA = 0.1
MAX_MISSING = 0.10


class TrajectoryOffMeshError(GeometryError):
    pass


@dataclass(frozen=True)
class Suspension:
    frequency: float = 1.5  # Hz
    damping: float = 0.1  # ratio

    def __post_init__(self):
        if not (self.frequency > 0 and self.damping >= 0):
            raise ValueError("suspension frequency must be > 0 and damping >= 0")


@dataclass(frozen=True)
class SimParams:
    suspension: Suspension | None = field(default_factory=Suspension)
    gravity: float = GRAVITY


@dataclass
class TrackProfile:
    """Ground heights under each wheel (RL, RR, FL, FR) with the rear axle
    at arc length ``s``."""

    s: np.ndarray
    heights: np.ndarray
    vehicle: VehicleModel = field(default_factory=VehicleModel)
    missing: int = 0

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.float64)
        self.heights = np.asarray(self.heights, dtype=np.float64)
        if len(self.s) < 2 or self.heights.shape != (len(self.s), 4):
            raise ValueError("profile needs >= 2 samples and 4 tracks")
        if not (np.diff(self.s) > 0).all() or not np.isfinite(self.heights).all():
            raise ValueError("profile stations must increase and heights be finite")

    @property
    def ds(self):
        return float(self.s[1] - self.s[0])


@dataclass
class VibrationTrace:
    dt: float
    a_z: np.ndarray
    omega_x: np.ndarray
    omega_y: np.ndarray
    wheel_z: np.ndarray
    speed: float

    def __len__(self):
        return len(self.a_z)


@dataclass(frozen=True)
class VibrationSummary:
    g_rms: float
    g_peak: float
    speed: float
    defect_id: str = ""

    def to_dict(self):
        return asdict(self)


# ground sampling

class _TriangleBins:
    """Uniform xy binning of triangle bounding boxes."""

    def __init__(self, tris, cell=None):
        self.tris = tris
        lo = tris[:, :, :2].min(axis=1)
        hi = tris[:, :, :2].max(axis=1)
        if cell is None:
            cell = max(float(np.median((hi - lo).max(axis=1))), 1e-3)
        self.cell = cell
        self.origin = lo.min(axis=0)
        i0 = np.floor((lo - self.origin) / cell).astype(np.int64)
        i1 = np.floor((hi - self.origin) / cell).astype(np.int64)
        self.ny = int(i1[:, 1].max()) + 1
        span = i1 - i0 + 1
        counts = span[:, 0] * span[:, 1]
        tid = np.repeat(np.arange(len(tris)), counts)
        local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        cx = i0[tid, 0] + local // span[tid, 1]
        cy = i0[tid, 1] + local % span[tid, 1]
        key = cx * self.ny + cy
        order = np.argsort(key, kind="stable")
        self.keys = key[order]
        self.tids = tid[order]

    def pairs(self, xy):
        ij = np.floor((xy - self.origin) / self.cell).astype(np.int64)
        ok = (ij >= 0).all(axis=1) & (ij[:, 1] < self.ny)
        key = np.where(ok, ij[:, 0] * self.ny + ij[:, 1], -1)
        a = np.searchsorted(self.keys, key, side="left")
        b = np.searchsorted(self.keys, key, side="right")
        n = np.where(ok, b - a, 0)
        pid = np.repeat(np.arange(len(xy)), n)
        off = np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n)
        return pid, self.tids[np.repeat(a, n) + off]


def ground_heights(meshes, xy):
    """Height of the first surface hit by a vertical ray cast down at each
    xy (NaN where nothing is hit). Uses the Moller-Trumbore solve specialised
    to direction (0, 0, -1)."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    tris = np.concatenate([m.vertices[m.faces] for m in meshes if m.n_faces]) \
        if any(m.n_faces for m in meshes) else np.zeros((0, 3, 3))
    out = np.full(len(xy), np.nan)
    if len(tris) == 0:
        return out
    pid, tid = _TriangleBins(tris).pairs(xy)
    t = tris[tid]
    e1 = t[:, 1, :2] - t[:, 0, :2]
    e2 = t[:, 2, :2] - t[:, 0, :2]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    s = xy[pid] - t[:, 0, :2]
    good = np.abs(det) >= PARALLEL_EPS
    det = np.where(good, det, 1.0)
    u = (s[:, 0] * e2[:, 1] - s[:, 1] * e2[:, 0]) / det
    v = (e1[:, 0] * s[:, 1] - e1[:, 1] * s[:, 0]) / det
    hit = good & (u >= 0) & (v >= 0) & (u + v <= 1)
    z = (1 - u - v) * t[:, 0, 2] + u * t[:, 1, 2] + v * t[:, 2, 2]
    # the first hit from above is the highest one
    np.fmax.at(out, pid[hit], z[hit])
    return out


def _scene_meshes(scene):
    if isinstance(scene, TriMesh):
        return [scene]
    if hasattr(scene, "roads") and hasattr(scene, "defects"):
        return [m for _, m in scene.roads] + [m for _, m in scene.defects]
    return list(scene)


def extract_track_profiles(scene, start, end, vehicle=VehicleModel(), ds=0.01):
    """Sample the four wheel tracks of a straight drive from ``start`` to ``end``.

    The rear axle runs from ``start`` until the front axle reaches ``end``.
    Missing hits copy the nearest valid sample on the same track.
    """
    if not ds > 0:
        raise ValueError("ds must be positive")
    a = np.asarray(start, dtype=np.float64)[:2]
    b = np.asarray(end, dtype=np.float64)[:2]
    L = float(np.hypot(*(b - a)))
    if L - vehicle.wheelbase < ds:
        raise ValueError("trajectory shorter than the wheelbase")
    d = (b - a) / L
    n = np.array([-d[1], d[0]])
    s = np.arange(0.0, L - vehicle.wheelbase + ds * 1e-6, ds)
    h = vehicle.width / 2.0
    offsets = [(0.0, h), (0.0, -h), (vehicle.wheelbase, h), (vehicle.wheelbase, -h)]
    pts = np.concatenate([a + (s[:, None] + lon) * d + lat * n for lon, lat in offsets])
    z = ground_heights(_scene_meshes(scene), pts).reshape(4, -1).T
    miss = ~np.isfinite(z)
    count = int(miss.sum())
    if count > MAX_MISSING * z.size:
        raise TrajectoryOffMeshError(f"{count} of {z.size} track samples missed the scene "
                                     f"(limit {MAX_MISSING:.0%}); trajectory leaves the mesh")
    if count:
        log.warning("%d track samples missed the mesh; filled from neighbours", count)
        for k in range(4):
            col = z[:, k]
            good = np.flatnonzero(np.isfinite(col))
            bad = np.flatnonzero(~np.isfinite(col))
            if len(bad):
                pos = np.clip(np.searchsorted(good, bad), 1, len(good) - 1) if len(good) > 1 else None
                if pos is None:
                    col[bad] = col[good[0]]
                else:
                    left, right = good[pos - 1], good[pos]
                    col[bad] = col[np.where(bad - left <= right - bad, left, right)]
    return TrackProfile(s, z, vehicle, count)


# simulation

def follow_wheels(heights, dt, gravity=GRAVITY):
    """Free-fall-limited wheel heights, velocities and landing impulses.

    ``heights`` is (n, k). Falling: z += v dt - g dt^2 / 2, v -= g dt.
    Contact: z = ground, impulse = -v / dt, v = 0.
    """
    h = np.asarray(heights, dtype=np.float64)
    n, k = h.shape
    z = np.empty_like(h)
    imp = np.zeros_like(h)
    z[0] = h[0]
    v = np.zeros(k)
    drop = 0.5 * gravity * dt * dt
    for i in range(1, n):
        zf = z[i - 1] + v * dt - drop
        falling = zf > h[i]
        z[i] = np.where(falling, zf, h[i])
        imp[i] = np.where(falling, 0.0, -v / dt)
        v = np.where(falling, v - gravity * dt, 0.0)
    return z, imp


def _quarter_car(zw, dt, susp):
    """Semi-implicit Euler body corner response to wheel motion."""
    w = 2 * math.pi * susp.frequency
    c2 = 2 * susp.damping * w
    vw = np.zeros_like(zw)
    vw[1:] = np.diff(zw, axis=0) / dt
    zc = np.zeros_like(zw)
    vc = np.zeros(zw.shape[1])
    acc = np.zeros_like(zw)
    zc[0] = zw[0]
    for i in range(1, len(zw)):
        a = w * w * (zw[i - 1] - zc[i - 1]) + c2 * (vw[i - 1] - vc)
        vc = vc + a * dt
        zc[i] = zc[i - 1] + vc * dt
        acc[i] = a
    return zc, acc.mean(axis=1)


def simulate_traversal(profile, speed, params=SimParams()):
    """Drive ``profile`` at ``speed`` km/h; Δt = Δs / speed."""
    if not speed > 0:
        raise ValueError("speed must be positive")
    v = speed / 3.6
    dt = profile.ds / v
    zw, imp = follow_wheels(profile.heights, dt, params.gravity)
    if params.suspension is None:
        corners = zw
        body = zw.mean(axis=1)
        az = np.zeros_like(body)
        az[1:-1] = (body[2:] - 2 * body[1:-1] + body[:-2]) / dt ** 2
        az += imp.mean(axis=1)
    else:
        corners, az = _quarter_car(zw, dt, params.suspension)
    veh = profile.vehicle
    roll = np.arctan((corners[:, [0, 2]].mean(axis=1) - corners[:, [1, 3]].mean(axis=1)) / veh.width)
    pitch = np.arctan((corners[:, [0, 1]].mean(axis=1) - corners[:, [2, 3]].mean(axis=1)) / veh.wheelbase)
    wx = np.zeros_like(roll)
    wy = np.zeros_like(pitch)
    wx[1:] = np.diff(roll) / dt
    wy[1:] = np.diff(pitch) / dt
    return VibrationTrace(dt, az, wx, wy, zw, float(speed))


def vibration_degree(trace, alpha=ALPHA, defect_id=""):
    """g_i = sqrt(wx^2 + wy^2 + alpha az^2); RMS and peak over the trace."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if len(trace) == 0:
        raise ValueError("empty trace")
    g = np.sqrt(trace.omega_x ** 2 + trace.omega_y ** 2 + alpha * trace.a_z ** 2)
    return VibrationSummary(float(np.sqrt(np.mean(g ** 2))), float(g.max()), trace.speed, defect_id)


@dataclass
class SweepResult:
    rows: list
    argmin_speed: float

    def table(self):
        return [r.to_dict() for r in self.rows]


def speed_sweep(profile, speeds, alpha=ALPHA, params=SimParams(), defect_id=""):
    """g per speed plus the speed minimising g_rms (ties go to the lowest speed)."""
    speeds = list(speeds)
    if not speeds:
        raise ValueError("speeds must be a nonempty list")
    if any(not sp > 0 for sp in speeds):
        raise ValueError("all speeds must be positive")
    rows = [vibration_degree(simulate_traversal(profile, sp, params), alpha, defect_id)
            for sp in speeds]
    best = min(range(len(rows)), key=lambda i: (rows[i].g_rms, speeds[i]))
    return SweepResult(rows, float(speeds[best]))


def sweep_scene(scene, start, end, speeds, alpha=ALPHA, params=SimParams(), vehicle=VehicleModel(),
                ds=0.01, defect_id=""):
    profile = extract_track_profiles(scene, start, end, vehicle, ds)
    return speed_sweep(profile, speeds, alpha, params, defect_id)


# test scenes

def pit_scene(depth, length, width=1.0, section=40.0, road_width=6.0, pit_start=10.0,
              lateral=4.0, wall=0.004, cell=0.5):
    """Flat road heightfield with one box-like pit of near-vertical walls.

    Walls span ``wall`` metres horizontally so the mesh stays 2.5D. The pit
    floor starts at ``pit_start`` and is ``length`` long; its centreline sits
    at y = ``lateral``. Returns (mesh, start, end) for a drive along y = 3.
    """
    x0, x1 = pit_start, pit_start + length
    y0, y1 = lateral - width / 2, lateral + width / 2
    xs = np.unique(np.r_[np.arange(0.0, section + 1e-9, cell), x0 - wall, x0 - 1e-3,
                         x1 - 1e-3, x1 - 1e-3 + wall])
    ys = np.unique(np.r_[np.arange(0.0, road_width + 1e-9, cell), y0 - wall, y0, y1, y1 + wall])
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    floor = (gx >= x0 - 1e-3 - 1e-12) & (gx <= x1 - 1e-3 + 1e-12) & (gy >= y0) & (gy <= y1)
    gz = np.where(floor, -depth, 0.0)
    nx, ny = len(xs), len(ys)
    idx = np.arange(nx * ny).reshape(nx, ny)
    a, b, c, d = idx[:-1, :-1], idx[1:, :-1], idx[1:, 1:], idx[:-1, 1:]
    faces = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3),
                            np.stack([a, c, d], -1).reshape(-1, 3)])
    mesh = TriMesh(np.c_[gx.ravel(), gy.ravel(), gz.ravel()], faces)
    return mesh, (0.0, lateral - 1.0), (section, lateral - 1.0)
