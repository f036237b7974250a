"""A small synthetic scene for tests, examples and benchmarks."""

from __future__ import annotations

import numpy as np

from .model_creator import (
    ElevationMap, RegisteredCloud, build_defect_model, extract_defect_instances,
    reconstruct_surface, sample_defect_points,
)
from .twin import RoadSegment


def desk_segments(rows=4, cols=5, length=12.0, width=7.0, cell=1.0):
    """``rows * cols`` abutting rectangular segments, each gridded at ``cell``."""
    segs = []
    for r in range(rows):
        for c in range(cols):
            x0 = c * length
            y0 = r * (width + 3.0)
            segs.append(RoadSegment.rectangle(f"seg{r}{c:02d}", x0, y0, x0 + length, y0 + width, cell))
    return segs


def pit_map(shape, depth, radius_cells, size=64, cell=0.01, seed=0):
    """Elevation map with one pit of the requested outline.

    ``shape`` is one of "round", "ellipse", "crack", "blob".
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy = cx = (size - 1) / 2.0
    dx, dy = xx - cx, yy - cy
    if shape == "round":
        r = np.hypot(dx, dy) / radius_cells
    elif shape == "ellipse":
        r = np.hypot(dx / 1.0, dy / 0.55) / radius_cells
    elif shape == "crack":
        r = np.hypot(dx / 1.0, dy / 0.22) / radius_cells
    elif shape == "blob":
        ang = np.arctan2(dy, dx)
        wobble = 1.0 + 0.18 * np.sin(3 * ang + rng.uniform(0, 6)) + 0.1 * np.cos(5 * ang)
        r = np.hypot(dx, dy) / (radius_cells * wobble)
    else:
        raise ValueError(f"unknown pit shape '{shape}'")
    h = np.where(r < 1.0, -depth * (1.0 - r ** 2) - 0.016, 0.0)
    return ElevationMap(h, cell, np.zeros(2))


DESK_DEFECTS = [
    ("round_deep", "round", 0.06, 14),
    ("round_small", "round", 0.03, 8),
    ("ellipse", "ellipse", 0.05, 16),
    ("crack", "crack", 0.03, 22),
    ("blob", "blob", 0.08, 15),
]


def desk_defects(stride=3):
    """Synthetic defect models built through the regular fine stream."""
    out = []
    for k, (name, shape, depth, rad) in enumerate(DESK_DEFECTS):
        emap = pit_map(shape, depth, rad, seed=k)
        inst = extract_defect_instances(emap)[0]
        s = sample_defect_points(emap, inst, stride)
        out.append((name, build_defect_model(s, emap=emap)))
    return out


def desk_surface(extent=(0.0, 0.0, 60.0, 37.0), spacing=0.25, leaf=0.5, seed=0):
    """Gently sloped, undulating road surface covering ``extent``."""
    x0, y0, x1, y1 = extent
    xs = np.arange(x0 - 1.0, x1 + 1.0 + 1e-9, spacing)
    ys = np.arange(y0 - 1.0, y1 + 1.0 + 1e-9, spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    rng = np.random.default_rng(seed)
    # kept inside one 0.5 m voxel layer so no two voxels share a column
    z = 0.1 + 0.004 * gx + 0.03 * np.sin(0.3 * gy) + rng.normal(0, 0.002, gx.shape)
    cloud = RegisteredCloud(np.c_[gx.ravel(), gy.ravel(), z.ravel()])
    return reconstruct_surface(cloud, leaf)


def desk_scene():
    """(segments, defect models, surface) for the desk-scale benchmark."""
    return desk_segments(), desk_defects(), desk_surface()
