"""Scripted planning scenarios and the four-planner comparison."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path as FsPath

import numpy as np

from .astar import plan_astar
from .grid import rasterize
from .hybrid import plan_hybrid_astar
from .lattice import RoadFrame, plan_lattice
from .metrics import evaluate_path
from .rrtstar import plan_rrtstar
from .vehicle import Pose, VehicleModel

PLANNERS = ("astar", "rrtstar", "lattice", "hybrid_astar")


@dataclass
class Scenario:
    roads: list
    defects: list
    bounds: tuple
    start: Pose
    goal: Pose
    reference_length: float
    resolution: float = 0.2
    vehicle: VehicleModel = field(default_factory=VehicleModel)
    centerline: list = None
    lattice: dict = field(default_factory=dict)
    rrtstar: dict = field(default_factory=dict)
    hybrid_astar: dict = field(default_factory=dict)
    name: str = "scenario"

    @classmethod
    def from_dict(cls, d):
        known = {"name", "roads", "defects", "bounds", "start", "goal", "reference_length",
                 "resolution", "vehicle", "centerline", "lattice", "rrtstar", "hybrid_astar"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown scenario keys: {sorted(extra)}")
        d = dict(d)
        d["start"] = Pose(*d["start"])
        d["goal"] = Pose(*d["goal"])
        d["bounds"] = tuple(d["bounds"])
        d["vehicle"] = VehicleModel(**d.get("vehicle", {}))
        return cls(**d)

    @classmethod
    def load(cls, path=None):
        """Read a scenario JSON file; ``None`` loads the bundled scenario."""
        if path is None:
            text = resources.files("roadtwin").joinpath("data/scenario.json").read_text("utf-8")
        else:
            text = FsPath(path).read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))

    def grid(self):
        return rasterize(self.roads, self.defects, self.bounds, self.resolution)

    def frame(self):
        if self.centerline is not None:
            return RoadFrame(self.centerline)
        return RoadFrame([[self.start.x, self.start.y], [self.goal.x, self.goal.y]])


def run_planner(name, scenario, grid=None, **overrides):
    grid = scenario.grid() if grid is None else grid
    v = scenario.vehicle
    if name == "astar":
        return plan_astar(grid, scenario.start, scenario.goal, v)
    if name == "rrtstar":
        kw = {**scenario.rrtstar, **overrides}
        return plan_rrtstar(grid, scenario.start, scenario.goal, v, **kw)
    if name == "lattice":
        kw = {**scenario.lattice, **overrides}
        return plan_lattice(grid, scenario.start, scenario.goal, v, frame=scenario.frame(), **kw)
    if name == "hybrid_astar":
        kw = {**scenario.hybrid_astar, **overrides}
        return plan_hybrid_astar(grid, scenario.start, scenario.goal, v, **kw)
    raise ValueError(f"unknown planner '{name}' (choose from {', '.join(PLANNERS)})")


def compare_planners(scenario, planners=PLANNERS):
    """{planner: (Path, PathMetrics, seconds)} on one shared grid."""
    grid = scenario.grid()
    out = {}
    for name in planners:
        t0 = time.perf_counter()
        path = run_planner(name, scenario, grid)
        dt = time.perf_counter() - t0
        out[name] = (path, evaluate_path(path, grid, scenario.vehicle, scenario.reference_length), dt)
    return out


def path_rows(path):
    """(s, x, y, yaw) rows for CSV export."""
    P = path.poses
    s = np.r_[0.0, np.cumsum(np.hypot(*np.diff(P[:, :2], axis=0).T))]
    return np.c_[s, P]
