"""State-lattice planner over a road-aligned (station, lateral) frame."""

from __future__ import annotations

import math

import numpy as np

from .astar import _as_pose, _check_endpoints
from .vehicle import (
    EDGE_SPACING, Path, UnreachableError, VehicleModel, poses_free, wheel_poses,
)

STATION_STEP = 5.1
LATERAL_STEP = 1.0


class RoadFrame:
    """Arc-length frame along a polyline centreline; lateral is positive to the left."""

    def __init__(self, centerline):
        c = np.asarray(centerline, dtype=np.float64).reshape(-1, 2)
        seg = np.diff(c, axis=0)
        ln = np.hypot(seg[:, 0], seg[:, 1])
        if len(c) < 2 or not (ln > 0).all():
            raise ValueError("centreline needs at least two distinct consecutive points")
        self.points = c
        self._dir = seg / ln[:, None]
        self._s = np.r_[0.0, np.cumsum(ln)]

    @property
    def length(self):
        return float(self._s[-1])

    def _segment(self, s):
        return np.clip(np.searchsorted(self._s, s, side="right") - 1, 0, len(self._dir) - 1)

    def to_world(self, s, l):
        s = np.asarray(s, dtype=np.float64)
        k = self._segment(s)
        d = self._dir[k]
        base = self.points[k] + (s - self._s[k])[..., None] * d
        nrm = np.stack([-d[..., 1], d[..., 0]], axis=-1)
        return base + np.asarray(l, dtype=np.float64)[..., None] * nrm

    def heading(self, s):
        d = self._dir[self._segment(np.asarray(s, dtype=np.float64))]
        return np.arctan2(d[..., 1], d[..., 0])

    def project(self, xy):
        """(s, l) of the closest centreline point."""
        p = np.asarray(xy, dtype=np.float64)
        rel = p - self.points[:-1]
        seg_len = np.diff(self._s)
        t = np.clip((rel * self._dir).sum(axis=1), 0.0, seg_len)
        foot = self.points[:-1] + t[:, None] * self._dir
        k = int(np.argmin(np.hypot(*(p - foot).T)))
        r = p - self.points[k]
        lat = self._dir[k, 0] * r[1] - self._dir[k, 1] * r[0]
        return float(self._s[k] + t[k]), float(lat)


def _edge_samples(frame, s0, l0, s1, l1, spacing=EDGE_SPACING):
    """Poses along the cubic l0 + (l1 - l0)(3 tau^2 - 2 tau^3), chords <= spacing."""
    ds, dl = s1 - s0, l1 - l0
    n = max(1, int(math.ceil(math.hypot(ds, 1.5 * dl) / spacing - 1e-9)))
    while True:
        tau = np.linspace(0.0, 1.0, n + 1)
        s = s0 + ds * tau
        l = l0 + dl * (3 * tau ** 2 - 2 * tau ** 3)
        xy = frame.to_world(s, l)
        chords = np.hypot(*np.diff(xy, axis=0).T)
        if chords.max() <= spacing:
            break
        n *= 2
    slope = dl * 6 * tau * (1 - tau) / ds
    yaw = frame.heading(s) + np.arctan(slope)
    return np.c_[xy, yaw]


def lateral_offsets(extent, step=LATERAL_STEP):
    k = int(math.floor(extent / step + 1e-9))
    return np.arange(-k, k + 1) * step


def _successors(l, layer):
    """Indices of the three layer offsets nearest to ``l`` (ties: lower index)."""
    order = np.argsort(np.abs(layer - l), kind="stable")
    return sorted(order[:3].tolist())


def plan_lattice(grid, start, goal, vehicle=VehicleModel(), frame=None, station_step=STATION_STEP,
                 lateral_step=LATERAL_STEP, lateral_extent=2.0, curvature_weight=0.1,
                 clearance_weight=0.0):
    """Dynamic programming over a layered lattice.

    Stations sit every ``station_step`` from the start's station; the goal
    forms the final one-node layer. Edge cost is arc length plus
    ``curvature_weight`` times total heading change, plus an optional
    clearance term ``clearance_weight * sum(ds / (d_min + 0.1))``.
    """
    start, goal = _as_pose(start), _as_pose(goal)
    _check_endpoints(grid, start, goal, vehicle)
    if frame is None:
        frame = RoadFrame([[start.x, start.y], [goal.x, goal.y]])
    elif not isinstance(frame, RoadFrame):
        frame = RoadFrame(frame)
    params = {"station_step": station_step, "lateral_step": lateral_step,
              "lateral_extent": lateral_extent, "curvature_weight": curvature_weight,
              "clearance_weight": clearance_weight, "centerline": frame.points.tolist()}
    s0, l0 = frame.project((start.x, start.y))
    sg, lg = frame.project((goal.x, goal.y))
    if sg <= s0:
        if sg == s0 and l0 == lg:
            return Path([start.as_array()], "lattice", params, kind="pose")
        raise UnreachableError("unreachable: goal is not ahead of the start along the road frame")
    offsets = lateral_offsets(lateral_extent, lateral_step)
    stations = [s0]
    while stations[-1] + station_step < sg - 1e-9:
        stations.append(stations[-1] + station_step)
    layers = [np.array([l0])] + [offsets] * (len(stations) - 1) + [np.array([lg])]
    stations.append(sg)

    best = [np.array([0.0])]
    back = [np.array([-1])]
    edges = {}
    for k in range(1, len(layers)):
        prev, cur = layers[k - 1], layers[k]
        bc = np.full(len(cur), np.inf)
        bp = np.full(len(cur), -1)
        for a in range(len(prev)):
            if not np.isfinite(best[k - 1][a]):
                continue
            for b in _successors(prev[a], cur):
                poses = _edge_samples(frame, stations[k - 1], prev[a], stations[k], cur[b])
                if not poses_free(poses, grid, vehicle).all():
                    continue
                c = best[k - 1][a] + _edge_cost(poses, grid, vehicle, curvature_weight,
                                                clearance_weight)
                if c < bc[b]:
                    bc[b], bp[b] = c, a
                    edges[(k, b)] = poses
        if not np.isfinite(bc).any():
            raise UnreachableError(f"unreachable: no feasible lattice edge into station {k} "
                                   f"(s = {stations[k]:.2f} m)")
        best.append(bc)
        back.append(bp)
    # walk back
    b = 0
    pieces = []
    for k in range(len(layers) - 1, 0, -1):
        if not np.isfinite(best[k][b]):
            raise UnreachableError("unreachable: goal layer not reached")
        pieces.append(edges[(k, b)])
        b = int(back[k][b])
    pieces.reverse()
    poses = np.vstack([pieces[0]] + [p[1:] for p in pieces[1:]])
    return Path(poses, "lattice", params, kind="pose")


def _edge_cost(poses, grid, vehicle, w_curv, w_clear):
    ds = np.hypot(*np.diff(poses[:, :2], axis=0).T)
    dyaw = np.abs(np.angle(np.exp(1j * np.diff(poses[:, 2]))))
    cost = ds.sum() + w_curv * dyaw.sum()
    if w_clear:
        w = wheel_poses(poses, vehicle).reshape(-1, 2)
        dmin = grid.defect_distance(w).reshape(-1, 4).min(axis=1)
        cost += w_clear * float((ds / (np.minimum(dmin[1:], 1e6) + 0.1)).sum())
    return float(cost)
