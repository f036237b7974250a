"""RRT* over the continuous plane with straight, wheel-checked edges."""

from __future__ import annotations

import math

import numpy as np

from .astar import _as_pose, _check_endpoints
from .vehicle import EDGE_SPACING, Path, UnreachableError, VehicleModel, poses_free, segment_poses

STEER = 1.0
GOAL_BIAS = 0.05
RADIUS_STEPS = 1


def _edge_ok(a, b, grid, vehicle):
    return bool(poses_free(segment_poses((a[0], a[1], 0.0), (b[0], b[1], 0.0)), grid, vehicle).all())


def plan_rrtstar(grid, start, goal, vehicle=VehicleModel(), seed=0, max_iters=5000,
                 steer=STEER, goal_bias=GOAL_BIAS):
    """Runs all ``max_iters`` iterations, then returns the cheapest goal connection.

    Rewiring radius is min(gamma * sqrt(ln n / n), RADIUS_STEPS * steer) with
    gamma = 2 * sqrt(free area / pi).
    """
    if max_iters <= 0:
        raise ValueError("max_iters must be positive")
    start, goal = _as_pose(start), _as_pose(goal)
    _check_endpoints(grid, start, goal, vehicle)
    params = {"seed": seed, "max_iters": max_iters, "steer": steer, "goal_bias": goal_bias,
              "edge_spacing": EDGE_SPACING}
    if (start.x, start.y) == (goal.x, goal.y):
        return Path([[start.x, start.y, start.yaw]], "rrtstar", params)
    rng = np.random.default_rng(seed)
    lo = grid.origin
    hi = grid.origin + np.array([grid.width, grid.height]) * grid.resolution
    gamma = 2.0 * math.sqrt(grid.free_area() / math.pi)
    r_cap = RADIUS_STEPS * steer
    g = np.array([goal.x, goal.y])

    cap = max_iters + 1
    nodes = np.empty((cap, 2))
    cost = np.empty(cap)
    parent = np.full(cap, -1, dtype=np.int64)
    nodes[0] = (start.x, start.y)
    cost[0] = 0.0
    n = 1
    goal_links = []

    for _ in range(max_iters):
        q = g if rng.random() < goal_bias else lo + rng.random(2) * (hi - lo)
        d = np.hypot(*(nodes[:n] - q).T)
        near_i = int(np.argmin(d))
        if d[near_i] == 0.0:
            continue
        p = nodes[near_i]
        new = q if d[near_i] <= steer else p + (q - p) * (steer / d[near_i])
        if not _edge_ok(p, new, grid, vehicle):
            continue
        radius = min(gamma * math.sqrt(math.log(n + 1) / (n + 1)), r_cap)
        dn = np.hypot(*(nodes[:n] - new).T)
        near = np.flatnonzero(dn <= radius)
        par, pc = near_i, cost[near_i] + dn[near_i]
        for k in near[np.argsort(cost[near] + dn[near], kind="stable")]:
            c = cost[k] + dn[k]
            if c >= pc:
                break
            if _edge_ok(nodes[k], new, grid, vehicle):
                par, pc = int(k), c
                break
        idx = n
        nodes[idx] = new
        cost[idx] = pc
        parent[idx] = par
        n += 1
        for k in near:
            if k == par:
                continue
            c = pc + dn[k]
            if c < cost[k] and _edge_ok(new, nodes[k], grid, vehicle):
                parent[k] = idx
                _propagate(k, cost[k] - c, parent[:n], cost)
        dg = float(np.hypot(*(g - new)))
        if dg <= steer and (dg == 0.0 or _edge_ok(new, g, grid, vehicle)):
            goal_links.append(idx)
    if not goal_links:
        raise UnreachableError(f"unreachable: RRT* found no goal connection (tree size {n})")
    links = np.array(goal_links)
    total = cost[links] + np.hypot(*(g - nodes[links]).T)
    last = int(links[int(np.argmin(total))])
    chain = []
    k = last
    while k != -1:
        chain.append(nodes[k].copy())
        k = parent[k]
    chain.reverse()
    if not np.array_equal(chain[-1], g):
        chain.append(g.copy())
    xy = np.array(chain)
    yaw = np.empty(len(xy))
    dd = np.diff(xy, axis=0)
    yaw[:-1] = np.arctan2(dd[:, 1], dd[:, 0])
    yaw[-1] = yaw[-2]
    return Path(np.c_[xy, yaw], "rrtstar", params, kind="polyline")


def _propagate(root, delta, parent, cost):
    """Lower the cost of ``root`` and all its descendants by ``delta``."""
    stack = [root]
    while stack:
        k = stack.pop()
        cost[k] -= delta
        stack.extend(np.flatnonzero(parent == k).tolist())
