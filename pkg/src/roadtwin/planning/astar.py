"""8-connected grid A* with wheel-level edge checks."""

from __future__ import annotations

import heapq
import math

import numpy as np

from .vehicle import (
    EDGE_SPACING, Path, Pose, UnreachableError, VehicleModel, collision_free, poses_free,
    segment_poses,
)

MOVES = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]


def _as_pose(p):
    return p if isinstance(p, Pose) else Pose(*p)


def _check_endpoints(grid, start, goal, vehicle):
    for name, p in (("start", start), ("goal", goal)):
        if not collision_free(p, grid, vehicle):
            raise ValueError(f"{name} pose {p} is not collision-free")


class EdgeOracle:
    """Memoised wheel feasibility of the straight move between two cell centres.

    The heading used for every sample is the move direction.
    """

    def __init__(self, grid, vehicle, spacing=EDGE_SPACING):
        self.grid = grid
        self.vehicle = vehicle
        self.spacing = spacing
        self._memo = {}

    def feasible(self, cell, moves):
        """Feasibility of each move in ``moves`` out of ``cell``."""
        todo = [m for m in moves if (cell, m) not in self._memo]
        if todo:
            a = self.grid.center(*cell)
            chunks = []
            for di, dj in todo:
                b = self.grid.center(cell[0] + di, cell[1] + dj)
                chunks.append(segment_poses((a[0], a[1], 0.0), (b[0], b[1], 0.0), self.spacing))
            ok = poses_free(np.vstack(chunks), self.grid, self.vehicle)
            pos = 0
            for m, ch in zip(todo, chunks):
                self._memo[(cell, m)] = bool(ok[pos:pos + len(ch)].all())
                pos += len(ch)
        return [self._memo[(cell, m)] for m in moves]


def neighbours(grid, cell):
    i, j = cell
    return [(di, dj) for di, dj in MOVES
            if 0 <= i + di < grid.height and 0 <= j + dj < grid.width]


def plan_astar(grid, start, goal, vehicle=VehicleModel()):
    start, goal = _as_pose(start), _as_pose(goal)
    _check_endpoints(grid, start, goal, vehicle)
    si, sj = (int(v[0]) for v in grid.cell_of((start.x, start.y)))
    gi, gj = (int(v[0]) for v in grid.cell_of((goal.x, goal.y)))
    s, g = (si, sj), (gi, gj)
    res = grid.resolution
    params = {"resolution": res, "connectivity": 8, "edge_spacing": EDGE_SPACING}

    def h(c):
        return math.hypot(c[0] - gi, c[1] - gj) * res

    oracle = EdgeOracle(grid, vehicle)
    cost = {s: 0.0}
    parent = {s: None}
    closed = set()
    heap = [(h(s), 0, s)]
    counter = 1
    while heap:
        _, _, c = heapq.heappop(heap)
        if c in closed:
            continue
        if c == g:
            break
        closed.add(c)
        moves = [m for m in neighbours(grid, c) if (c[0] + m[0], c[1] + m[1]) not in closed]
        for m, ok in zip(moves, oracle.feasible(c, moves)):
            if not ok:
                continue
            n = (c[0] + m[0], c[1] + m[1])
            nc = cost[c] + math.hypot(*m) * res
            if nc < cost.get(n, math.inf):
                cost[n] = nc
                parent[n] = c
                heapq.heappush(heap, (nc + h(n), counter, n))
                counter += 1
    else:
        raise UnreachableError(f"unreachable: A* exhausted {len(closed)} cells")
    cells = []
    c = g
    while c is not None:
        cells.append(c)
        c = parent[c]
    cells.reverse()
    xy = np.array([grid.center(*c) for c in cells])
    yaw = np.empty(len(xy))
    if len(xy) == 1:
        yaw[0] = start.yaw
    else:
        d = np.diff(xy, axis=0)
        yaw[:-1] = np.arctan2(d[:, 1], d[:, 0])
        yaw[-1] = yaw[-2]
    return Path(np.c_[xy, yaw], "astar", params, kind="polyline")
