"""Hybrid A*: forward bicycle-model arcs searched over (x, y, yaw) cells."""

from __future__ import annotations

import heapq
import math

import numpy as np

from .astar import _as_pose, _check_endpoints
from .vehicle import (
    EDGE_SPACING, Path, UnreachableError, VehicleModel, interpolate_poses, poses_free, wrap_angle,
)

YAW_BIN = math.radians(15.0)
STEERING = (-math.radians(30.0), 0.0, math.radians(30.0))
ARC_LENGTH = 1.0
W_STEER = 0.5
W_LANE = 0.2
GOAL_TOL = 1.0
GOAL_YAW_TOL = YAW_BIN


def primitive(pose, steer, wheelbase, length=ARC_LENGTH, spacing=EDGE_SPACING):
    """Poses along a constant-steering arc, sampled every ``spacing``, start included."""
    x, y, yaw = pose
    n = max(1, int(math.ceil(length / spacing - 1e-9)))
    s = np.linspace(0.0, length, n + 1)
    k = math.tan(steer) / wheelbase
    if k == 0.0:
        return np.c_[x + s * math.cos(yaw), y + s * math.sin(yaw), np.full(len(s), yaw)]
    th = yaw + k * s
    return np.c_[x + (np.sin(th) - math.sin(yaw)) / k,
                 y - (np.cos(th) - math.cos(yaw)) / k,
                 wrap_angle(th)]


def plan_hybrid_astar(grid, start, goal, vehicle=VehicleModel(), w_steer=W_STEER, w_lane=W_LANE,
                      cell=None, goal_tol=GOAL_TOL, goal_yaw_tol=GOAL_YAW_TOL,
                      max_expansions=200_000):
    """Forward-only search; each closed (cell, yaw bin) keeps its first-arriving pose.

    A node within ``goal_tol`` and ``goal_yaw_tol`` of the goal finishes the
    search once the short interpolated connection to the goal pose is
    collision-free and turns no faster than the primitives do. Lane change
    is measured as lateral offset from the start-goal line.
    """
    start, goal = _as_pose(start), _as_pose(goal)
    _check_endpoints(grid, start, goal, vehicle)
    cell = grid.resolution if cell is None else float(cell)
    params = {"yaw_bin_deg": 15.0, "steering_deg": [-30.0, 0.0, 30.0], "arc_length": ARC_LENGTH,
              "w_steer": w_steer, "w_lane": w_lane, "cell": cell, "goal_tol": goal_tol,
              "goal_yaw_tol": goal_yaw_tol}
    s0 = start.as_array()
    g = goal.as_array()
    if np.array_equal(s0[:2], g[:2]) and abs(wrap_angle(g[2] - s0[2])) <= goal_yaw_tol:
        return Path([s0], "hybrid_astar", params, kind="pose")
    axis = g[:2] - s0[:2]
    axis = axis / np.linalg.norm(axis) if np.linalg.norm(axis) > 0 else np.array([1.0, 0.0])

    def lateral(p):
        r = p[:2] - s0[:2]
        return axis[0] * r[1] - axis[1] * r[0]

    def key(p):
        return (int(math.floor(p[0] / cell)), int(math.floor(p[1] / cell)),
                int(math.floor(wrap_angle(p[2]) / YAW_BIN + 0.5)) % 24)

    def h(p):
        return math.hypot(g[0] - p[0], g[1] - p[1])

    kappa = math.tan(max(abs(a) for a in STEERING)) / vehicle.wheelbase

    def reaches_goal(p):
        d = h(p)
        dyaw = abs(wrap_angle(g[2] - p[2]))
        if d > goal_tol or dyaw > goal_yaw_tol or dyaw > kappa * d + 1e-12:
            return False
        return bool(poses_free(interpolate_poses(p, g), grid, vehicle).all())

    nodes = [s0]
    parent = [-1]
    arcs = [None]
    gcost = [0.0]
    seen = {key(s0)}
    heap = [(h(s0), 0)]
    expansions = 0
    while heap:
        _, idx = heapq.heappop(heap)
        p = nodes[idx]
        if reaches_goal(p):
            return _assemble(idx, nodes, parent, arcs, g, params)
        expansions += 1
        if expansions > max_expansions:
            break
        for steer in STEERING:
            arc = primitive(p, steer, vehicle.wheelbase)
            q = arc[-1]
            kq = key(q)
            if kq in seen:
                continue
            if not poses_free(arc[1:], grid, vehicle).all():
                continue
            seen.add(kq)
            c = gcost[idx] + ARC_LENGTH + w_steer * abs(steer) + w_lane * abs(lateral(q) - lateral(p))
            nodes.append(q)
            parent.append(idx)
            arcs.append(arc)
            gcost.append(c)
            heapq.heappush(heap, (c + h(q), len(nodes) - 1))
    raise UnreachableError(f"unreachable: Hybrid A* exhausted after {expansions} expansions")


def _assemble(idx, nodes, parent, arcs, goal, params):
    chain = []
    while idx > 0:
        chain.append(arcs[idx])
        idx = parent[idx]
    chain.reverse()
    pieces = [nodes[0][None]] + [a[1:] for a in chain]
    poses = np.vstack(pieces)
    if not np.array_equal(poses[-1], goal):
        tail = interpolate_poses(poses[-1], goal)
        poses = np.vstack([poses, tail[1:]])
    return Path(poses, "hybrid_astar", params, kind="pose")
