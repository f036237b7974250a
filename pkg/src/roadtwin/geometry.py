"""Geometric primitives: rays, planes, voxels, overlap tests, height lookup."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .mesh import GeometryError, TriMesh

PARALLEL_EPS = 1e-12


class Miss(enum.Enum):
    """Why a ray query produced no hit. Every member is falsy."""

    OUTSIDE = "outside"
    PARALLEL = "parallel"
    BEHIND = "behind"
    DEGENERATE = "degenerate"

    def __bool__(self):
        return False


@dataclass(frozen=True)
class RayHit:
    t: float
    u: float
    v: float


def ray_triangle_intersect(origin, direction, tri, ray=True):
    """Moller-Trumbore intersection of ``origin + t*direction`` with a triangle.

    Returns a RayHit, or a falsy Miss. With ``ray=False`` the full line is
    tested and negative t is allowed.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    p0, p1, p2 = (np.asarray(p, dtype=np.float64) for p in tri)
    if not np.any(d):
        raise GeometryError("ray direction must be nonzero")
    e1 = p1 - p0
    e2 = p2 - p0
    if np.linalg.norm(np.cross(e1, e2)) < PARALLEL_EPS:
        return Miss.DEGENERATE
    pvec = np.cross(d, e2)
    det = float(np.dot(pvec, e1))
    if abs(det) < PARALLEL_EPS:
        return Miss.PARALLEL
    s = o - p0
    u = float(np.dot(pvec, s)) / det
    qvec = np.cross(s, e1)
    v = float(np.dot(qvec, d)) / det
    if u < 0.0 or v < 0.0 or u + v > 1.0:
        return Miss.OUTSIDE
    t = float(np.dot(qvec, e2)) / det
    if ray and t < 0.0:
        return Miss.BEHIND
    return RayHit(t, u, v)


def downward_hits(points, p0, p1, p2):
    """Vectorised vertical ray test: does a ray from each xy straight down hit
    the paired triangle? The test is purely planar, so returns a bool array
    (degenerate triangles never hit)."""
    pts = np.asarray(points, dtype=np.float64)[:, :2]
    a, b, c = (np.asarray(p, dtype=np.float64)[:, :2] for p in (p0, p1, p2))
    e1 = b - a
    e2 = c - a
    # direction (0,0,-1): det reduces to the projected cross product
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    ok = np.abs(det) >= PARALLEL_EPS
    s = pts - a
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (s[:, 0] * e2[:, 1] - s[:, 1] * e2[:, 0]) / det
        v = (e1[:, 0] * s[:, 1] - e1[:, 1] * s[:, 0]) / det
    return ok & (u >= 0) & (v >= 0) & (u + v <= 1)


class Overlap(enum.Enum):
    YES = "yes"
    NO = "no"
    DEGENERATE = "degenerate"

    def __bool__(self):
        return self is Overlap.YES


def _orient(p, q, r):
    return ((q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1])
            - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0]))


def _segments_touch(p, q, r, s):
    """Closed-segment intersection, broadcasting over leading axes."""
    o1 = _orient(p, q, r)
    o2 = _orient(p, q, s)
    o3 = _orient(r, s, p)
    o4 = _orient(r, s, q)
    cross = (o1 * o2 <= 0) & (o3 * o4 <= 0)
    colinear = (o1 == 0) & (o2 == 0)
    lo1 = np.minimum(p, q)
    hi1 = np.maximum(p, q)
    lo2 = np.minimum(r, s)
    hi2 = np.maximum(r, s)
    boxes = np.all((lo1 <= hi2) & (lo2 <= hi1), axis=-1)
    return np.where(colinear, boxes, cross & boxes)


def triangles_overlap_polygon(tris, polygon):
    """Vectorised closed overlap test of (m, 3, 2) triangles with a simple polygon.

    Boundary contact counts. Degenerate triangles report False; see
    triangle_polygon_overlap_2d for the flagged scalar form.
    """
    from .triangulation import points_in_polygon

    tris = np.asarray(tris, dtype=np.float64)[..., :2]
    poly = np.asarray(polygon, dtype=np.float64)[:, :2]
    m = len(tris)
    out = np.zeros(m, dtype=bool)
    if m == 0:
        return out
    area = _orient(tris[:, 0], tris[:, 1], tris[:, 2])
    live = area != 0
    pmin = poly.min(axis=0)
    pmax = poly.max(axis=0)
    live &= np.all(tris.max(axis=1) >= pmin, axis=1) & np.all(tris.min(axis=1) <= pmax, axis=1)
    idx = np.flatnonzero(live)
    if len(idx) == 0:
        return out
    t = tris[idx]
    q0 = poly
    q1 = np.roll(poly, -1, axis=0)
    hit = np.zeros(len(idx), dtype=bool)
    for k in range(3):
        a = t[:, k][:, None, :]
        b = t[:, (k + 1) % 3][:, None, :]
        hit |= _segments_touch(a, b, q0[None], q1[None]).any(axis=1)
    rest = ~hit
    if rest.any():
        hit[rest] |= points_in_polygon(t[rest, 0], poly)
    rest = ~hit
    if rest.any():
        tr = t[rest]
        s = np.sign(area[idx][rest])[:, None]
        pv = poly[0][None]
        inside = ((s * _orient(tr[:, 0][:, None], tr[:, 1][:, None], pv[:, None]) >= 0)
                  & (s * _orient(tr[:, 1][:, None], tr[:, 2][:, None], pv[:, None]) >= 0)
                  & (s * _orient(tr[:, 2][:, None], tr[:, 0][:, None], pv[:, None]) >= 0))
        hit[rest] |= inside[:, 0]
    out[idx] = hit
    return out


def triangle_polygon_overlap_2d(tri, polygon):
    """Overlap.YES when the closed triangle meets the polygon's interior or
    boundary, Overlap.NO otherwise, Overlap.DEGENERATE (falsy) for zero area."""
    t = np.asarray(tri, dtype=np.float64)[:, :2]
    if _orient(t[0], t[1], t[2]) == 0:
        return Overlap.DEGENERATE
    return Overlap.YES if triangles_overlap_polygon(t[None], polygon)[0] else Overlap.NO


@dataclass(frozen=True)
class Plane:
    normal: np.ndarray
    offset: float

    def signed_distance(self, points):
        return np.asarray(points, dtype=np.float64) @ self.normal - self.offset


class PlaneFitError(GeometryError):
    pass


def _canonical_normal(n):
    n = n / np.linalg.norm(n)
    for c in (n[2], n[1], n[0]):
        if c != 0:
            return n if c > 0 else -n
    return n


def _lstsq_plane(points):
    c = points.mean(axis=0)
    _, s, vt = np.linalg.svd(points - c, full_matrices=False)
    if len(s) < 2 or s[1] <= 1e-12 * max(s[0], 1e-300):
        raise PlaneFitError("inliers are collinear or coincident")
    n = _canonical_normal(vt[-1])
    return Plane(n, float(n @ c))


def fit_plane_robust(points, inlier_tol=0.02, seed=0, iterations=200):
    """Consensus plane search followed by a least-squares refit on the inliers.

    Returns (Plane, inlier mask). The normal is oriented with z >= 0. Among
    hypotheses with equal support the earliest one wins.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(p)
    if n < 3:
        raise PlaneFitError(f"need at least 3 points, got {n}")
    rng = np.random.default_rng(seed)
    best = -1
    best_plane = None
    for _ in range(iterations):
        i, j, k = rng.choice(n, 3, replace=False)
        nrm = np.cross(p[j] - p[i], p[k] - p[i])
        ln = np.linalg.norm(nrm)
        if ln < 1e-12:
            continue
        nrm = nrm / ln
        support = int(np.count_nonzero(np.abs((p - p[i]) @ nrm) <= inlier_tol))
        if support > best:
            best = support
            best_plane = (nrm, float(nrm @ p[i]))
    if best_plane is None:
        raise PlaneFitError("all sampled triples were degenerate")
    mask = np.abs(p @ best_plane[0] - best_plane[1]) <= inlier_tol
    plane = _lstsq_plane(p[mask])
    mask = np.abs(plane.signed_distance(p)) <= inlier_tol
    if mask.sum() < 3:
        raise PlaneFitError("refined plane keeps fewer than 3 inliers")
    return plane, mask


def voxel_downsample(cloud, leaf):
    """Centroid of each occupied ``leaf``-sized voxel, ordered by voxel key."""
    if not leaf > 0:
        raise GeometryError("leaf must be positive")
    p = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if len(p) == 0:
        return p.copy()
    keys = np.floor(p / leaf).astype(np.int64)
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    m = int(inv.max()) + 1
    sums = np.zeros((m, 3))
    np.add.at(sums, inv, p)
    counts = np.bincount(inv, minlength=m).astype(np.float64)
    return sums / counts[:, None]


class HeightIndex:
    """2D nearest-vertex lookup returning vertex z; ties go to the lowest index."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        if len(v) == 0:
            raise GeometryError("height index needs at least one vertex")
        self.xy = np.ascontiguousarray(v[:, :2])
        self.z = v[:, 2].copy()
        self.tree = cKDTree(self.xy)

    def nearest(self, xy):
        """Index of the nearest vertex for each (n, 2) query."""
        q = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        k = min(4, len(self.xy))
        dist, idx = self.tree.query(q, k=k)
        dist = dist.reshape(len(q), k)
        idx = idx.reshape(len(q), k)
        cand = self.xy[idx]
        d2 = (cand[..., 0] - q[:, None, 0]) ** 2 + (cand[..., 1] - q[:, None, 1]) ** 2
        best = d2.min(axis=1)
        masked = np.where(d2 == best[:, None], idx, np.iinfo(np.int64).max)
        out = masked.min(axis=1)
        # the k-th neighbour could still tie; resolve those with a ball query
        slack = dist[:, 0] * 1e-9 + 1e-12
        unsure = dist[:, -1] <= dist[:, 0] + slack if k == 4 else np.zeros(len(q), bool)
        for r in np.flatnonzero(unsure):
            near = np.asarray(self.tree.query_ball_point(q[r], dist[r, 0] + slack[r] * 4))
            c = self.xy[near]
            dd = (c[:, 0] - q[r, 0]) ** 2 + (c[:, 1] - q[r, 1]) ** 2
            out[r] = near[dd == dd.min()].min()
        return out

    def height(self, xy):
        return self.z[self.nearest(xy)]


def nearest_height(surface, xy):
    """z of the vertex nearest to ``xy`` in the plane.

    ``surface`` may be a SurfaceModel, a TriMesh or a HeightIndex; a single
    point yields a float and an (n, 2) array yields an array.
    """
    if isinstance(surface, HeightIndex):
        index = surface
    elif hasattr(surface, "height_index"):
        index = surface.height_index()
    elif isinstance(surface, TriMesh):
        index = HeightIndex(surface.vertices)
    else:
        index = HeightIndex(surface)
    q = np.asarray(xy, dtype=np.float64)
    z = index.height(q.reshape(-1, 2))
    return float(z[0]) if q.ndim == 1 else z
