"""Occupancy grid for wheel-level planning."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

from ..mesh import GeometryError
from ..triangulation import points_in_polygon

FREE = 0
DEFECT = 1
OFF_ROAD = 2


class GridMap:
    """Cell states on a regular grid; ``state[i, j]`` is row i (y), column j (x).

    The centre of cell (i, j) is ``origin + ((j + 0.5) * res, (i + 0.5) * res)``.
    Treat instances as immutable once built.
    """

    def __init__(self, state, resolution=0.2, origin=(0.0, 0.0)):
        self.state = np.asarray(state, dtype=np.int8)
        if self.state.ndim != 2 or self.state.size == 0:
            raise GeometryError("grid must be a nonempty 2D array")
        if not resolution > 0:
            raise GeometryError("resolution must be positive")
        if not np.isin(self.state, (FREE, DEFECT, OFF_ROAD)).all():
            raise GeometryError("unknown cell state")
        self.resolution = float(resolution)
        self.origin = np.asarray(origin, dtype=np.float64).reshape(2)
        self._tree = None
        self._defects = None

    @property
    def height(self):
        return self.state.shape[0]

    @property
    def width(self):
        return self.state.shape[1]

    @property
    def diagonal(self):
        return math.hypot(self.width, self.height) * self.resolution

    def __eq__(self, other):
        return (isinstance(other, GridMap) and self.resolution == other.resolution
                and np.array_equal(self.origin, other.origin)
                and np.array_equal(self.state, other.state))

    def cell_centers(self):
        j, i = np.meshgrid(np.arange(self.width), np.arange(self.height))
        return np.stack([self.origin[0] + (j + 0.5) * self.resolution,
                         self.origin[1] + (i + 0.5) * self.resolution], axis=-1)

    def center(self, i, j):
        return (self.origin[0] + (j + 0.5) * self.resolution,
                self.origin[1] + (i + 0.5) * self.resolution)

    def cell_of(self, xy):
        """(i, j) integer indices of the cells holding the points (may be out of range)."""
        p = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        j = np.floor((p[:, 0] - self.origin[0]) / self.resolution).astype(np.int64)
        i = np.floor((p[:, 1] - self.origin[1]) / self.resolution).astype(np.int64)
        return i, j

    def state_at(self, xy):
        """Cell state per point; points off the map read as OFF_ROAD."""
        i, j = self.cell_of(xy)
        inside = (i >= 0) & (j >= 0) & (i < self.height) & (j < self.width)
        out = np.full(len(i), OFF_ROAD, dtype=np.int8)
        out[inside] = self.state[i[inside], j[inside]]
        return out

    def defect_centers(self):
        if self._defects is None:
            ii, jj = np.nonzero(self.state == DEFECT)
            self._defects = np.c_[self.origin[0] + (jj + 0.5) * self.resolution,
                                  self.origin[1] + (ii + 0.5) * self.resolution]
        return self._defects

    def defect_distance(self, xy):
        """Distance from each point to the nearest defect cell centre (inf if none)."""
        p = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        d = self.defect_centers()
        if len(d) == 0:
            return np.full(len(p), np.inf)
        if self._tree is None:
            self._tree = cKDTree(d)
        dist, _ = self._tree.query(p)
        return dist

    def free_area(self):
        return float(np.count_nonzero(self.state == FREE)) * self.resolution ** 2


def rasterize(road_polygons, defect_polygons, bounds, resolution=0.2):
    """Label cell centres: inside a defect polygon -> DEFECT, else inside a road
    polygon -> FREE, else OFF_ROAD. ``bounds`` is (xmin, ymin, xmax, ymax)."""
    x0, y0, x1, y1 = (float(b) for b in bounds)
    if not resolution > 0:
        raise GeometryError("resolution must be positive")
    if not (x1 > x0 and y1 > y0):
        raise GeometryError(f"empty bounds {bounds}")
    w = int(math.ceil((x1 - x0) / resolution - 1e-9))
    h = int(math.ceil((y1 - y0) / resolution - 1e-9))
    grid = GridMap(np.full((h, w), OFF_ROAD, dtype=np.int8), resolution, (x0, y0))
    c = grid.cell_centers().reshape(-1, 2)
    state = np.full(len(c), OFF_ROAD, dtype=np.int8)
    for poly in road_polygons:
        state[_inside(c, poly)] = FREE
    for poly in defect_polygons:
        state[_inside(c, poly)] = DEFECT
    return GridMap(state.reshape(h, w), resolution, (x0, y0))


def _inside(c, poly):
    poly = np.asarray(poly, dtype=np.float64)[:, :2]
    lo = poly.min(axis=0)
    hi = poly.max(axis=0)
    box = np.all((c >= lo) & (c <= hi), axis=1)
    out = np.zeros(len(c), dtype=bool)
    if box.any():
        out[box] = points_in_polygon(c[box], poly)
    return out


def rasterize_scene(assets, resolution=0.2, bounds=None, margin=0.0):
    """Grid map from generated scene assets: road polygons from the manifest,
    defect polygons from each defect asset's boundary loop."""
    from ..mesh import extract_boundary_loops

    roads = [np.asarray(s["polygon"]) for s in assets.manifest.get("segments", [])]
    defects = []
    for _, mesh in assets.defects:
        loop = extract_boundary_loops(mesh)[0]
        defects.append(mesh.vertices[loop, :2])
    if bounds is None:
        allp = np.vstack(roads)
        lo = allp.min(axis=0) - margin
        hi = allp.max(axis=0) + margin
        bounds = (lo[0], lo[1], hi[0], hi[1])
    return rasterize(roads, defects, bounds, resolution)
