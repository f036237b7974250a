# %% [markdown]
# # Four planners on one damaged road
#
# The bundled scenario is a two-lane road with a scatter of potholes. Each
# planner gets the same occupancy grid and vehicle, and each path is scored
# on deviation from the reference length, mean absolute heading change per
# metre, and average wheel clearance from damaged cells.

# %%
from pathlib import Path

from roadtwin import io as rio, svg
from roadtwin.planning.scenario import Scenario, compare_planners
from roadtwin.planning.vehicle import path_collision_free

OUT = Path("out/notebooks/planning")
OUT.mkdir(parents=True, exist_ok=True)

scenario = Scenario.load()
grid = scenario.grid()
print(f"grid {grid.width} x {grid.height} cells at {grid.resolution} m, "
      f"reference length {scenario.reference_length:.1f} m")

# %% [markdown]
# ## Plan
# RRT* is seeded, so repeated runs produce the same tree.

# %%
results = compare_planners(scenario)
print(f"{'planner':14s} {'deviation %':>12s} {'rad/m':>8s} {'clear m':>8s} {'time s':>7s} replay")
for name, (path, m, secs) in results.items():
    ok = path_collision_free(path, grid, scenario.vehicle)
    print(f"{name:14s} {m.deviation:12.3f} {m.smoothness:8.4f} {m.clearance:8.3f} {secs:7.2f} {ok}")

# %% [markdown]
# Lattice and Hybrid A* keep headings continuous, so their curvature stays
# low; grid A* turns in 45 degree steps and RRT* in random ones.

# %%
ranked = sorted(results, key=lambda k: results[k][1].smoothness)
print("smoothest to roughest:", " < ".join(ranked))

# %%
rio.write_gridmap(grid, OUT / "gridmap.pgm")
svg.path_plot(OUT / "paths.svg", grid, {k: v[0].poses for k, v in results.items()}, "planned paths")
print("wrote", OUT / "paths.svg")
