"""Coarse road-surface and fine defect reconstruction.

The coarse path levels a fused cloud, voxel-downsamples it and meshes the
planar projection. The fine path works on a road-relative elevation map:
pits are segmented by a depth threshold, sampled on a stride grid that is
expanded until every cell is covered, wrapped in a one-cell ring of road
cells, meshed, and aligned so the ring plane sits at z = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .geometry import HeightIndex, PlaneFitError, _lstsq_plane, fit_plane_robust, voxel_downsample
from .mesh import GeometryError, TriMesh, extract_boundary_loops, polygon_area
from .triangulation import constrained_delaunay_2d, delaunay_2d

DEFAULT_DEPTH_THRESHOLD = -0.015
DEFAULT_LEAF = 0.5
DEFAULT_STRIDE = 3
RING_RMS_LIMIT = 0.005


@dataclass
class RegisteredCloud:
    points: np.ndarray
    frame_ids: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise GeometryError("cloud has non-finite coordinates")
        if self.frame_ids is not None:
            self.frame_ids = np.asarray(self.frame_ids, dtype=np.int64).reshape(-1)
            if len(self.frame_ids) != len(self.points):
                raise GeometryError("frame_ids length differs from point count")

    def __len__(self):
        return len(self.points)

    def subset(self, keep):
        return RegisteredCloud(self.points[keep],
                               None if self.frame_ids is None else self.frame_ids[keep])


@dataclass
class SemanticMask:
    """Binary road mask (rows, cols) and the 3x4 camera projection."""

    mask: np.ndarray
    projection: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask).astype(bool)
        self.projection = np.asarray(self.projection, dtype=np.float64).reshape(3, 4)
        if self.mask.ndim != 2 or self.mask.size == 0:
            raise GeometryError("mask must be a nonempty 2D grid")
        if np.linalg.matrix_rank(self.projection) < 3:
            raise GeometryError("projection matrix must have full row rank")

    @property
    def height(self):
        return self.mask.shape[0]

    @property
    def width(self):
        return self.mask.shape[1]


@dataclass
class ElevationMap:
    """Road-relative heights; NaN marks missing cells.

    Cell (r, c) has its centre at ``origin + (c, r) * cell_size``.
    """

    heights: np.ndarray
    cell_size: float
    origin: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=np.float64)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(2)
        if self.heights.ndim != 2:
            raise GeometryError("elevation map must be 2D")
        if not self.cell_size > 0:
            raise GeometryError("cell_size must be positive")
        if np.isinf(self.heights).any():
            raise GeometryError("heights must be finite or NaN")

    def cell_xy(self, cells):
        cells = np.asarray(cells).reshape(-1, 2)
        return self.origin + cells[:, ::-1] * self.cell_size


@dataclass
class SurfaceModel:
    mesh: TriMesh
    leveling: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        self.leveling = np.asarray(self.leveling, dtype=np.float64).reshape(4, 4)
        self._index = None

    def height_index(self):
        if self._index is None:
            self._index = HeightIndex(self.mesh.vertices)
        return self._index

    def validate(self):
        self.mesh.check(compact=True)
        xy = self.mesh.vertices[:, :2]
        if cKDTree(xy).query_pairs(1e-6):
            raise GeometryError("surface has two vertices at the same (x, y)")


@dataclass
class DefectModel:
    """Defect mesh in its source frame plus the rigid map onto the road plane.

    ``boundary`` is the outer loop (vertex indices, counter-clockwise once
    aligned). ``metadata`` holds bbox_min, bbox_max, max_depth and area,
    all measured in the aligned frame.
    """

    mesh: TriMesh
    boundary: list
    alignment: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.alignment = np.asarray(self.alignment, dtype=np.float64).reshape(4, 4)
        self.boundary = [int(i) for i in self.boundary]

    def aligned_mesh(self):
        return self.mesh.transformed(self.alignment)

    def boundary_centroid(self):
        """Mean of the aligned boundary vertices in the plane."""
        v = self.aligned_mesh().vertices
        return v[self.boundary, :2].mean(axis=0)

    def validate(self, allow_bumps=False):
        self.mesh.check(compact=True)
        loops = extract_boundary_loops(self.mesh)
        if len(loops) != 1:
            raise GeometryError(f"defect must have one boundary loop, found {len(loops)}")
        if set(loops[0]) != set(self.boundary) or len(loops[0]) != len(self.boundary):
            raise GeometryError("stored boundary does not match the mesh boundary")
        v = self.aligned_mesh().vertices
        bz = np.abs(v[self.boundary, 2]).max()
        if bz >= 1e-6:
            raise GeometryError(f"aligned boundary is off the road plane by {bz:.3g} m")
        if not allow_bumps and v[:, 2].max() > 1e-6:
            raise GeometryError("defect rises above the road plane (bumps are disabled)")


# ---------------------------------------------------------------- coarse stream

def filter_points_by_mask(cloud, mask):
    """Keep points projecting in front of the camera onto a road pixel."""
    p = cloud.points
    if len(p) == 0:
        return cloud.subset(np.zeros(0, dtype=bool))
    h = np.c_[p, np.ones(len(p))] @ mask.projection.T
    w = h[:, 2]
    front = w > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(front, h[:, 0] / np.where(front, w, 1.0), -1.0)
        v = np.where(front, h[:, 1] / np.where(front, w, 1.0), -1.0)
    col = np.floor(u)
    row = np.floor(v)
    ok = front & (col >= 0) & (row >= 0) & (col < mask.width) & (row < mask.height)
    keep = np.zeros(len(p), dtype=bool)
    keep[ok] = mask.mask[row[ok].astype(np.int64), col[ok].astype(np.int64)]
    return cloud.subset(keep)


def fuse_clouds(clouds):
    """Concatenate per-frame clouds, tagging each point with its frame index."""
    pts = [c.points for c in clouds]
    ids = [np.full(len(c.points), k, dtype=np.int64) for k, c in enumerate(clouds)]
    if not pts:
        return RegisteredCloud(np.zeros((0, 3)), np.zeros(0, dtype=np.int64))
    return RegisteredCloud(np.vstack(pts), np.concatenate(ids))


def rotation_to_z(normal):
    """Smallest rotation taking unit ``normal`` onto +z."""
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    z = np.array([0.0, 0.0, 1.0])
    v = np.cross(n, z)
    s = np.linalg.norm(v)
    c = float(n @ z)
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        return np.diag([1.0, -1.0, -1.0])
    k = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + k + k @ k * ((1 - c) / s ** 2)


def plane_alignment(plane):
    """4x4 rigid transform mapping ``plane`` onto z = 0 with normal +z."""
    m = np.eye(4)
    m[:3, :3] = rotation_to_z(plane.normal)
    m[2, 3] = 0.0 - plane.offset
    return m


def level_to_ground(cloud, seed=0, inlier_tol=0.02):
    plane, _ = fit_plane_robust(cloud.points, inlier_tol, seed=seed)
    m = plane_alignment(plane)
    pts = cloud.points @ m[:3, :3].T + m[:3, 3]
    return RegisteredCloud(pts, cloud.frame_ids), m


def reconstruct_surface(cloud, leaf=DEFAULT_LEAF, leveling=None):
    pts = voxel_downsample(cloud.points, leaf)
    if len(pts) < 3:
        raise GeometryError(f"only {len(pts)} points survive downsampling; need 3")
    pairs = sorted(cKDTree(pts[:, :2]).query_pairs(1e-6))
    if pairs:
        raise GeometryError(f"duplicate (x, y) after projection at points {pairs[0]}")
    mesh = delaunay_2d(pts[:, :2])
    mesh.vertices[:, 2] = pts[:, 2]
    return SurfaceModel(mesh, np.eye(4) if leveling is None else leveling)


# ---------------------------------------------------------------- fine stream

_EIGHT = np.ones((3, 3), dtype=bool)


def extract_defect_instances(emap, depth_threshold=DEFAULT_DEPTH_THRESHOLD, min_area=0.0):
    """8-connected pits below ``depth_threshold``, largest first."""
    if not depth_threshold < 0:
        raise GeometryError("depth_threshold must be negative")
    if min_area < 0:
        raise GeometryError("min_area must be non-negative")
    h = emap.heights
    cand = np.zeros(h.shape, dtype=bool)
    np.less(h, depth_threshold, out=cand, where=~np.isnan(h))
    labels, n = ndimage.label(cand, structure=_EIGHT)
    if n == 0:
        return []
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=n + 1)
    first = np.full(n + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat, np.arange(flat.size))
    cell_area = emap.cell_size ** 2
    keep = [k for k in range(1, n + 1) if counts[k] * cell_area >= min_area]
    keep.sort(key=lambda k: (-counts[k], first[k]))
    return [labels == k for k in keep]


@dataclass
class DefectSamples:
    """Sampled grid cells (row, col): defect samples first, then the ring."""

    cells: np.ndarray
    is_ring: np.ndarray
    cell_size: float
    origin: np.ndarray
    instance: np.ndarray

    def xy(self):
        return self.origin + self.cells[:, ::-1] * self.cell_size

    def points(self, emap):
        z = emap.heights[self.cells[:, 0], self.cells[:, 1]]
        if np.isnan(z).any():
            raise GeometryError("a sampled cell has no height")
        return np.c_[self.xy(), z]


def sample_defect_points(emap, instance, stride=DEFAULT_STRIDE):
    """Stride grid over the instance, expanded in raster order until every
    instance cell is within ``stride`` (Chebyshev) of a sample, plus a
    one-cell ring of non-defect neighbours."""
    inst = np.asarray(instance, dtype=bool)
    if not inst.any():
        raise GeometryError("instance mask is empty")
    stride = int(stride)
    if stride < 1:
        raise GeometryError("stride must be at least 1 cell")
    cells = np.argwhere(inst)
    r0, c0 = cells.min(axis=0)
    on_grid = ((cells[:, 0] - r0) % stride == 0) & ((cells[:, 1] - c0) % stride == 0)
    chosen = np.zeros(inst.shape, dtype=bool)
    chosen[cells[on_grid, 0], cells[on_grid, 1]] = True
    covered = ndimage.binary_dilation(chosen, structure=np.ones((2 * stride + 1,) * 2, bool))
    rows, cols = inst.shape
    for r, c in cells[~on_grid].tolist():
        if not covered[r, c]:
            chosen[r, c] = True
            covered[max(r - stride, 0):r + stride + 1, max(c - stride, 0):c + stride + 1] = True
    ring = ndimage.binary_dilation(inst, structure=_EIGHT) & ~inst
    r_lo, c_lo = cells.min(axis=0)
    r_hi, c_hi = cells.max(axis=0)
    if r_lo == 0 or c_lo == 0 or r_hi == rows - 1 or c_hi == cols - 1:
        raise GeometryError("defect instance touches the map border; ring incomplete")
    samp = np.argwhere(chosen)
    ring_cells = np.argwhere(ring)
    return DefectSamples(np.vstack([samp, ring_cells]),
                         np.r_[np.zeros(len(samp), bool), np.ones(len(ring_cells), bool)],
                         float(emap.cell_size), emap.origin.copy(), inst.copy())


_MOORE = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]


def trace_outer_contour(region):
    """Moore-neighbour trace of the outer contour of an 8-connected region."""
    region = np.pad(np.asarray(region, dtype=bool), 1)
    start = tuple(int(v) for v in np.argwhere(region)[0])
    contour = [start]
    cur = start
    back = 6  # west of the raster-first cell is background
    second = None
    while True:
        for k in range(1, 9):
            d = (back + k) % 8
            nb = (cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1])
            if region[nb]:
                break
        else:
            break  # isolated cell
        prev_d = (back + k - 1) % 8
        prev = (cur[0] + _MOORE[prev_d][0], cur[1] + _MOORE[prev_d][1])
        if cur == start:
            if second is None:
                second = nb
            elif nb == second:
                break
        cur = nb
        back = _MOORE.index((prev[0] - cur[0], prev[1] - cur[1]))
        if cur == start:
            continue
        contour.append(cur)
    return [(r - 1, c - 1) for r, c in contour]


def build_defect_model(samples, points=None, emap=None, allow_bumps=False,
                       rms_limit=RING_RMS_LIMIT):
    """Mesh the samples, fit the ring plane and align it to z = 0.

    Heights come from ``points`` (one 3D point per sample, any frame) or
    from ``emap``. Triangulation happens on the integer cell lattice, so
    the connectivity is independent of the 3D frame.
    """
    if points is None:
        if emap is None:
            raise GeometryError("need points or an elevation map")
        points = samples.points(emap)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3).copy()
    if len(pts) != len(samples.cells):
        raise GeometryError("one point per sample is required")
    ring = samples.is_ring
    if ring.sum() < 3:
        raise GeometryError("need at least 3 ring points")
    ring_pts = pts[ring]
    rc = ring_pts[:, :2] - ring_pts[:, :2].mean(axis=0)
    sv = np.linalg.svd(rc, compute_uv=False)
    if sv[-1] <= 1e-9 * max(sv[0], 1e-300):
        raise GeometryError("ring points are collinear in the plane")

    cells = samples.cells
    region = samples.instance | ndimage.binary_dilation(samples.instance, structure=_EIGHT)
    if ndimage.binary_fill_holes(region).sum() != region.sum():
        raise GeometryError("defect region has holes; multiple boundary loops unsupported")
    contour = trace_outer_contour(region)
    if len(set(contour)) != len(contour):
        raise GeometryError("defect outline pinches; cannot form a single boundary")
    lookup = {(r, c): i for i, (r, c) in enumerate(cells.tolist())}
    try:
        loop = [lookup[rc] for rc in contour]
    except KeyError as exc:
        raise GeometryError(f"contour cell {exc.args[0]} is not a sample") from None
    lattice = cells[:, ::-1].astype(np.float64)
    tri = constrained_delaunay_2d(lattice, boundary=loop)
    mesh = TriMesh(pts, tri.faces)
    used = np.zeros(len(pts), dtype=bool)
    used[mesh.faces.ravel()] = True
    if not used.all():
        raise GeometryError("some samples fall outside the defect outline")

    try:
        plane = _lstsq_plane(ring_pts)
    except PlaneFitError as exc:
        raise GeometryError(f"ring plane fit failed: {exc}") from None
    resid = plane.signed_distance(ring_pts)
    rms = float(np.sqrt(np.mean(resid ** 2)))
    if rms > rms_limit:
        raise GeometryError(f"ring residual {rms * 1000:.2f} mm RMS exceeds {rms_limit * 1000:.1f} mm")
    # pseudo-height: ring points snap onto the plane
    pts[ring] = ring_pts - resid[:, None] * plane.normal
    mesh = TriMesh(pts, mesh.faces)
    align = plane_alignment(plane)
    aligned = mesh.transformed(align)

    loops = extract_boundary_loops(mesh)
    if len(loops) != 1:
        raise GeometryError(f"defect mesh has {len(loops)} boundary loops")
    boundary = loops[0]
    if polygon_area(aligned.vertices[boundary, :2]) < 0:
        boundary = boundary[::-1]
    if not allow_bumps and aligned.vertices[:, 2].max() > 1e-6:
        raise GeometryError("defect rises above the ring plane (bumps are disabled)")
    v = aligned.vertices
    meta = {
        "bbox_min": v.min(axis=0).tolist(),
        "bbox_max": v.max(axis=0).tolist(),
        "max_depth": float(-v[:, 2].min()),
        "area": aligned.area_2d(),
    }
    model = DefectModel(mesh, boundary, align, meta)
    model.validate(allow_bumps=allow_bumps)
    return model


def reconstruct_defects(emap, depth_threshold=DEFAULT_DEPTH_THRESHOLD, min_area=0.0,
                        stride=DEFAULT_STRIDE, allow_bumps=False):
    """Run the whole fine stream; returns one DefectModel per instance."""
    out = []
    for inst in extract_defect_instances(emap, depth_threshold, min_area):
        s = sample_defect_points(emap, inst, stride)
        out.append(build_defect_model(s, emap=emap, allow_bumps=allow_bumps))
    return out
