"""Digital twin generation: place defects into planar road segments, cut,
stitch, restore elevation, and split the result into road/defect assets."""

from __future__ import annotations

import hashlib
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import _segments_touch, downward_hits, nearest_height, triangles_overlap_polygon
from .mesh import (
    GeometryError, TriMesh, boundary_edges, extract_boundary_loops, face_components,
    pinch_vertices, polygon_area, weld_vertices,
)
from .triangulation import constrained_delaunay_2d, points_in_polygon

log = logging.getLogger(__name__)

WELD_TOL = 1e-6
TOOL_VERSION = "0.1.0"


class PlacementError(RuntimeError):
    def __init__(self, achieved, requested, index):
        self.achieved = achieved
        self.requested = requested
        super().__init__(f"placed {achieved} of {requested} defects; "
                         f"placement {index} found no feasible spot")


class CutError(GeometryError):
    pass


class WeldError(GeometryError):
    def __init__(self, unmatched):
        self.unmatched = list(unmatched)
        super().__init__(f"weld left {len(self.unmatched)} boundary vertices unmatched: "
                         f"{self.unmatched[:10]}")


# ---------------------------------------------------------------- segments

@dataclass
class RoadSegment:
    """Planar road segment mesh and its outer polygon (counter-clockwise)."""

    id: str
    mesh: TriMesh
    polygon: np.ndarray

    def __post_init__(self):
        self.polygon = np.asarray(self.polygon, dtype=np.float64).reshape(-1, 2)
        if polygon_area(self.polygon) < 0:
            self.polygon = self.polygon[::-1].copy()

    @property
    def area(self):
        return polygon_area(self.polygon)

    @classmethod
    def rectangle(cls, seg_id, x0, y0, x1, y1, cell=1.0):
        nx = max(1, int(round((x1 - x0) / cell)))
        ny = max(1, int(round((y1 - y0) / cell)))
        xs = np.linspace(x0, x1, nx + 1)
        ys = np.linspace(y0, y1, ny + 1)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        verts = np.c_[gx.ravel(), gy.ravel(), np.zeros(gx.size)]
        idx = np.arange(gx.size).reshape(nx + 1, ny + 1)
        a = idx[:-1, :-1].ravel()
        b = idx[1:, :-1].ravel()
        c = idx[1:, 1:].ravel()
        d = idx[:-1, 1:].ravel()
        faces = np.vstack([np.c_[a, b, c], np.c_[a, c, d]])
        poly = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
        return cls(seg_id, TriMesh(verts, faces), poly)

    def outer_loop_ok(self, mesh=None, tol=1e-9):
        """True when ``mesh`` (default: own mesh) has a loop tracing the polygon."""
        m = self.mesh if mesh is None else mesh
        loops = extract_boundary_loops(m)
        return any(_loop_matches_polygon(m.vertices[lp, :2], self.polygon, tol) for lp in loops)


def _point_segment_dist(p, a, b):
    ab = b - a
    t = np.clip(((p[:, None, :] - a) * ab).sum(-1) / np.maximum((ab * ab).sum(-1), 1e-300), 0, 1)
    proj = a + t[..., None] * ab
    return np.linalg.norm(p[:, None, :] - proj, axis=-1).min(axis=1)


def _loop_matches_polygon(loop_xy, polygon, tol=1e-9):
    """Same point set: loop vertices lie on the polygon outline, every polygon
    corner is a loop vertex, and the enclosed areas agree."""
    a = polygon
    b = np.roll(polygon, -1, axis=0)
    if _point_segment_dist(loop_xy, a, b).max() > tol:
        return False
    if _point_segment_dist(polygon, loop_xy, np.roll(loop_xy, -1, axis=0)).max() > tol:
        return False
    d = np.linalg.norm(polygon[:, None, :] - loop_xy[None], axis=-1).min(axis=1)
    if d.max() > tol:
        return False
    return abs(abs(polygon_area(loop_xy)) - abs(polygon_area(polygon))) <= tol * max(
        1.0, abs(polygon_area(polygon)))


# ---------------------------------------------------------------- placements

@dataclass
class PlacementConfig:
    scale_min: float = 0.5
    scale_max: float = 1.5
    yaw_min: float = 0.0
    yaw_max: float = 2 * math.pi
    max_attempts: int = 200
    require_cuttable: bool = True

    def __post_init__(self):
        if not 0 < self.scale_min <= self.scale_max:
            raise ValueError("need 0 < scale_min <= scale_max")
        if self.yaw_max < self.yaw_min:
            raise ValueError("yaw_max must be >= yaw_min")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")


@dataclass
class Placement:
    index: int
    defect: str
    segment: str
    position: tuple
    yaw: float
    scale: float
    seed: tuple
    attempts: int = 1

    def to_dict(self):
        return {"index": self.index, "defect": self.defect, "segment": self.segment,
                "position": [float(self.position[0]), float(self.position[1])],
                "yaw": float(self.yaw), "scale": float(self.scale),
                "seed": [int(s) for s in self.seed], "attempts": int(self.attempts)}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["index"]), d["defect"], d["segment"], tuple(d["position"]),
                   float(d["yaw"]), float(d["scale"]), tuple(d["seed"]), int(d.get("attempts", 1)))


def placement_matrix(model, position, yaw, scale):
    """Aligned-defect frame -> world: centre on the boundary centroid, then
    scale, rotate about z and translate to ``position``."""
    c = model.boundary_centroid()
    cy, sy = math.cos(yaw), math.sin(yaw)
    m = np.eye(4)
    m[:3, :3] = scale * np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1.0]])
    m[:2, 3] = np.asarray(position, dtype=np.float64) - m[:2, :2] @ c
    return m @ model.alignment


def _placed_boundary(model, position, yaw, scale):
    m = placement_matrix(model, position, yaw, scale)
    return model.mesh.transformed(m).vertices[model.boundary, :2]


def polygon_strictly_inside(inner, outer):
    """True when simple polygon ``inner`` lies in the open interior of ``outer``."""
    if not points_in_polygon(inner, outer).all():
        return False
    a = inner[:, None, :]
    b = np.roll(inner, -1, axis=0)[:, None, :]
    c = outer[None]
    d = np.roll(outer, -1, axis=0)[None]
    return not _segments_touch(a, b, c, d).any()


def polygons_touch(p, q):
    """Closed-set intersection test for two simple polygons."""
    if np.any(p.max(axis=0) < q.min(axis=0)) or np.any(q.max(axis=0) < p.min(axis=0)):
        return False
    a = p[:, None, :]
    b = np.roll(p, -1, axis=0)[:, None, :]
    if _segments_touch(a, b, q[None], np.roll(q, -1, axis=0)[None]).any():
        return True
    return bool(points_in_polygon(p[:1], q)[0] or points_in_polygon(q[:1], p)[0])


def overlapping_faces(mesh, polygon, candidates=None):
    """Indices of faces whose closed 2D footprint meets ``polygon``."""
    f = mesh.faces if candidates is None else mesh.faces[candidates]
    hit = triangles_overlap_polygon(mesh.vertices[f][:, :, :2], polygon)
    ids = np.flatnonzero(hit)
    return ids if candidates is None else np.asarray(candidates)[ids]


def _outer_vertices(mesh):
    return {u for u, _ in boundary_edges(mesh.faces)}


def _model_lookup(library):
    if hasattr(library, "defects"):
        return dict(library.defects())
    return dict(library)


def sample_placements(segments, library, count, master_seed, config=None):
    """Sequentially accept ``count`` placements; placement i draws from its own
    stream seeded by (master_seed, i)."""
    cfg = config or PlacementConfig()
    if count < 0:
        raise ValueError("count must be non-negative")
    models = _model_lookup(library)
    if not models:
        raise ValueError("library has no defect models")
    names = sorted(models)
    if count == 0:
        return []
    areas = np.array([s.area for s in segments])
    weights = areas / areas.sum()
    outer = {s.id: _outer_vertices(s.mesh) for s in segments}
    accepted = []
    taken_polys = {s.id: [] for s in segments}
    taken_verts = {s.id: set() for s in segments}
    for i in range(count):
        ss = np.random.SeedSequence(master_seed, spawn_key=(i,))
        rng = np.random.default_rng(ss)
        found = None
        for attempt in range(1, cfg.max_attempts + 1):
            k = int(rng.choice(len(segments), p=weights))
            seg = segments[k]
            name = names[int(rng.integers(len(names)))]
            scale = float(rng.uniform(cfg.scale_min, cfg.scale_max))
            yaw = float(rng.uniform(cfg.yaw_min, cfg.yaw_max))
            u = rng.random(2)
            model = models[name]
            rel = _placed_boundary(model, (0.0, 0.0), yaw, scale)
            lo = seg.polygon.min(axis=0) - rel.min(axis=0)
            hi = seg.polygon.max(axis=0) - rel.max(axis=0)
            if np.any(hi < lo):
                continue
            pos = lo + u * (hi - lo)
            poly = rel + pos
            if not polygon_strictly_inside(poly, seg.polygon):
                continue
            if any(polygons_touch(poly, q) for q in taken_polys[seg.id]):
                continue
            faces = overlapping_faces(seg.mesh, poly)
            verts = set(np.unique(seg.mesh.faces[faces]).tolist())
            if cfg.require_cuttable and (verts & outer[seg.id] or verts & taken_verts[seg.id]):
                continue
            found = Placement(i, name, seg.id, (float(pos[0]), float(pos[1])), yaw, scale,
                              (int(master_seed), i), attempt)
            taken_polys[seg.id].append(poly)
            taken_verts[seg.id] |= verts
            break
        if found is None:
            raise PlacementError(len(accepted), count, i)
        accepted.append(found)
    return accepted


# ---------------------------------------------------------------- cutting

def _overlap_point(tri, poly):
    """A point of the closed triangle that also lies in the closed polygon."""
    from .geometry import _orient

    cen = tri.mean(axis=0)
    if points_in_polygon(cen[None], poly)[0]:
        return cen
    for p in tri:
        if points_in_polygon(p[None], poly)[0]:
            return p
    area = _orient(tri[0], tri[1], tri[2])
    for q in poly:
        s = [_orient(tri[k], tri[(k + 1) % 3], q) * np.sign(area) for k in range(3)]
        if min(s) >= 0:
            return q
    n = len(poly)
    for k in range(3):
        a, b = tri[k], tri[(k + 1) % 3]
        for j in range(n):
            c, d = poly[j], poly[(j + 1) % n]
            den = (b[0] - a[0]) * (d[1] - c[1]) - (b[1] - a[1]) * (d[0] - c[0])
            if den == 0:
                continue
            t = ((c[0] - a[0]) * (d[1] - c[1]) - (c[1] - a[1]) * (d[0] - c[0])) / den
            s = ((c[0] - a[0]) * (b[1] - a[1]) - (c[1] - a[1]) * (b[0] - a[0])) / den
            if 0 <= t <= 1 and 0 <= s <= 1:
                return a + t * (b - a)
    return cen


def _regularise(faces, removed, protect):
    """Grow the removed set until it is a disk: swallow enclosed islands and
    the fans of pinch vertices. ``protect`` marks faces that must stay."""
    removed = removed.copy()
    for _ in range(100):
        keep = ~removed
        # islands: kept components that do not reach the outer boundary
        kept_idx = np.flatnonzero(keep)
        if len(kept_idx):
            labels = face_components(faces[kept_idx])
            outer = {u for u, _ in boundary_edges(faces)}
            touching = set()
            for lab, f in zip(labels, faces[kept_idx]):
                if outer & set(f.tolist()):
                    touching.add(int(lab))
            island = np.array([lab not in touching for lab in labels])
            if island.any():
                if protect[kept_idx[island]].any():
                    raise CutError("cut would isolate part of an existing defect")
                removed[kept_idx[island]] = True
                continue
        rem = faces[removed]
        pins = pinch_vertices(rem)
        if not pins:
            if len(extract_boundary_loops(rem)) != 1:
                raise CutError("cut region is not a single disk")
            return removed
        grow = np.isin(faces, pins).any(axis=1) & ~removed
        if protect[grow].any():
            raise CutError("cut pinches against an existing defect")
        removed |= grow
    raise CutError("could not regularise cut region")


def cut_hole(mesh, polygon, confirm=True):
    """Remove every face whose 2D footprint meets ``polygon``.

    Each removal is confirmed by a downward ray from a point of the overlap.
    Returns (cut mesh sharing the vertex array, sorted removed face ids).
    Raises CutError if the cut reaches the mesh's outer boundary.
    """
    poly = np.asarray(polygon, dtype=np.float64)[:, :2]
    tags = mesh.tags if mesh.tags is not None else np.full(mesh.n_faces, -1)
    road = np.flatnonzero(tags < 0)
    ids = overlapping_faces(mesh, poly, road)
    if len(ids) and (tags[ids] >= 0).any():
        raise CutError("polygon overlaps an existing defect")
    if confirm and len(ids):
        tri = mesh.vertices[mesh.faces[ids]][:, :, :2]
        pts = np.array([_overlap_point(t, poly) for t in tri])
        pts = pts + 1e-6 * (tri.mean(axis=1) - pts)
        ok = downward_hits(pts, tri[:, 0], tri[:, 1], tri[:, 2])
        if not ok.all():
            raise CutError(f"ray confirmation failed for faces {ids[~ok].tolist()}")
    removed = np.zeros(mesh.n_faces, dtype=bool)
    removed[ids] = True
    if removed.any():
        removed = _regularise(mesh.faces, removed, tags >= 0)
    # the outer boundary is the full mesh's loop with the largest area
    loops = extract_boundary_loops(mesh)
    big = max(loops, key=lambda lp: abs(polygon_area(mesh.vertices[lp, :2]))) if loops else []
    if set(np.unique(mesh.faces[removed]).tolist()) & set(big):
        raise CutError("cut touches the segment's outer boundary")
    kept = ~removed
    out = TriMesh(mesh.vertices, mesh.faces[kept], None if mesh.tags is None else mesh.tags[kept])
    return out, np.flatnonzero(removed)


# ---------------------------------------------------------------- stitching

def integrate_defect(cut_mesh, defect, placement, tag=None, stats=None):
    """Stitch ``defect`` into the hole of ``cut_mesh`` that contains the placement.

    The annulus between the hole loop and the placed defect boundary is
    re-meshed by constrained Delaunay triangulation; annulus faces are tagged
    -1 (road) and defect faces ``tag`` (default: placement index). Returns a
    compacted TriMesh. ``stats`` (a dict) receives the weld pair count.
    """
    tag = placement.index if tag is None else tag
    V = cut_mesh.vertices
    F = cut_mesh.faces
    T = cut_mesh.tags if cut_mesh.tags is not None else np.full(len(F), -1, dtype=np.int64)
    pos = np.asarray(placement.position, dtype=np.float64)
    loops = extract_boundary_loops(F)
    containing = [lp for lp in loops if points_in_polygon(pos[None], V[lp, :2])[0]]
    if not containing:
        raise GeometryError("no hole surrounds the placement position")
    hole = min(containing, key=lambda lp: abs(polygon_area(V[lp, :2])))

    m = placement_matrix(defect, placement.position, placement.yaw, placement.scale)
    dm = defect.mesh.transformed(m)
    dv = dm.vertices.copy()
    dv[defect.boundary, 2] = 0.0  # pseudo-height
    bxy = dv[defect.boundary, :2]
    nh, nb = len(hole), len(defect.boundary)
    pts = np.vstack([V[hole, :2], bxy])
    cdt = constrained_delaunay_2d(pts, holes=[list(range(nh, nh + nb))], boundary=list(range(nh)))

    base_copy = len(V)
    base_def = base_copy + nb
    remap = np.r_[np.asarray(hole, dtype=np.int64), base_copy + np.arange(nb)]
    ann_faces = remap[cdt.faces]
    copies = dv[defect.boundary]
    verts = np.vstack([V, copies, dv])
    faces = np.vstack([F, ann_faces, dm.faces + base_def])
    tags = np.r_[T, np.full(len(ann_faces), -1), np.full(dm.n_faces, tag)]
    merged_mesh = TriMesh(verts, faces, tags)
    cand = np.r_[base_copy + np.arange(nb), base_def + np.asarray(defect.boundary)]
    welded, pairs = weld_vertices(merged_mesh, WELD_TOL, candidates=cand)
    matched = {b for _, b in pairs} | {a for a, _ in pairs}
    unmatched = [int(c) for c in cand if c not in matched]
    if unmatched or len(pairs) != nb:
        raise WeldError(unmatched)
    if stats is not None:
        stats["weld_pairs"] = len(pairs)
    return welded


def integrate_segment(segment, placements, models, confirm=True):
    """Cut and stitch every placement of one segment, in index order."""
    mesh = TriMesh(segment.mesh.vertices, segment.mesh.faces,
                   np.full(segment.mesh.n_faces, -1, dtype=np.int64))
    for p in sorted(placements, key=lambda q: q.index):
        model = models[p.defect]
        poly = _placed_boundary(model, p.position, p.yaw, p.scale)
        cut, _ = cut_hole(mesh, poly, confirm=confirm)
        mesh = integrate_defect(cut, model, p)
    if not placements:
        mesh, _ = mesh.compact()
    return mesh


def restore_elevation(mesh, surface, placements):
    """Road vertices take the surface height; each defect moves rigidly by the
    height at its placement position (its boundary centroid)."""
    v = mesh.vertices.copy()
    tags = mesh.tags if mesh.tags is not None else np.full(mesh.n_faces, -1)
    by_index = {p.index: p for p in placements}
    in_defect = np.full(len(v), -1, dtype=np.int64)
    for k in np.unique(tags[tags >= 0]):
        ids = np.unique(mesh.faces[tags == k])
        in_defect[ids] = k
    road = in_defect < 0
    if road.any():
        v[road, 2] = nearest_height(surface, v[road, :2])
    for k in np.unique(in_defect[~road]):
        p = by_index[int(k)]
        off = nearest_height(surface, np.asarray(p.position, dtype=np.float64))
        sel = in_defect == k
        v[sel, 2] = mesh.vertices[sel, 2] + off
    return TriMesh(v, mesh.faces.copy(), None if mesh.tags is None else mesh.tags.copy())


# ---------------------------------------------------------------- assets

@dataclass
class SceneAssets:
    roads: list
    defects: list
    manifest: dict = field(default_factory=dict)

    def road(self, rid):
        return dict(self.roads)[rid]

    def defect(self, did):
        return dict(self.defects)[did]


def defect_asset_id(placement):
    return f"{placement.index:04d}"


def disassemble_assets(segment_meshes, placements, manifest=None):
    """Split tagged segment meshes into compacted road and defect assets."""
    by_index = {p.index: p for p in placements}
    roads, defects = [], []
    for seg_id, mesh in segment_meshes:
        if mesh.tags is None:
            raise GeometryError(f"segment {seg_id} has no face tags")
        bad = set(np.unique(mesh.tags[mesh.tags >= 0]).tolist()) - set(by_index)
        if bad:
            raise GeometryError(f"segment {seg_id} has faces tagged with unknown defects {sorted(bad)}")
        road, _ = TriMesh(mesh.vertices, mesh.faces[mesh.tags < 0]).compact()
        roads.append((seg_id, road))
        for k in sorted(set(np.unique(mesh.tags[mesh.tags >= 0]).tolist())):
            d, _ = TriMesh(mesh.vertices, mesh.faces[mesh.tags == k]).compact()
            defects.append((defect_asset_id(by_index[k]), d))
    defects.sort(key=lambda it: it[0])
    return SceneAssets(roads, defects, dict(manifest or {}))


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    def add(self, asset, check, ok, detail=""):
        self.checks.append({"asset": asset, "check": check, "ok": bool(ok), "detail": detail})

    @property
    def passed(self):
        return all(c["ok"] for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c["ok"]]

    def to_dict(self):
        return {"passed": self.passed, "n_checks": len(self.checks), "failures": self.failures()}


def _sampled_overlaps(a, b, max_samples=400):
    """Count sampled interior points of ``a``'s faces strictly inside ``b``'s faces."""
    if a.n_faces == 0 or b.n_faces == 0:
        return 0
    amin, amax = a.vertices[:, :2].min(0), a.vertices[:, :2].max(0)
    bmin, bmax = b.vertices[:, :2].min(0), b.vertices[:, :2].max(0)
    if np.any(amax < bmin) or np.any(bmax < amin):
        return 0
    step = max(1, a.n_faces // max_samples)
    tri = a.vertices[a.faces[::step]][:, :, :2]
    samples = np.vstack([tri.mean(axis=1), np.einsum("k,fkd->fd", np.array([0.6, 0.2, 0.2]), tri)])
    bt = b.vertices[b.faces][:, :, :2]
    lo = bt.min(axis=1)
    hi = bt.max(axis=1)
    e1 = bt[:, 1] - bt[:, 0]
    e2 = bt[:, 2] - bt[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    count = 0
    eps = 1e-9
    for p in samples:
        cand = np.flatnonzero(np.all((lo <= p) & (p <= hi), axis=1) & (np.abs(det) > 1e-18))
        if not len(cand):
            continue
        s = p - bt[cand, 0]
        u = (s[:, 0] * e2[cand, 1] - s[:, 1] * e2[cand, 0]) / det[cand]
        v = (e1[cand, 0] * s[:, 1] - e1[cand, 1] * s[:, 0]) / det[cand]
        if np.any((u > eps) & (v > eps) & (u + v < 1 - eps)):
            count += 1
    return count


def validate_scene(assets):
    """Check loop structure, connectivity, degeneracy, sampled overlap and
    boundary coincidence using the manifest's placements and polygons."""
    rep = ValidationReport()
    man = assets.manifest
    placements = [Placement.from_dict(d) for d in man.get("placements", [])]
    polygons = {s["id"]: np.asarray(s["polygon"], dtype=np.float64) for s in man.get("segments", [])}
    per_segment = {}
    for p in placements:
        per_segment.setdefault(p.segment, []).append(p)
    roads = dict(assets.roads)
    defects = dict(assets.defects)

    for rid, mesh in assets.roads:
        _basic_checks(rep, f"road/{rid}", mesh)
        try:
            loops = extract_boundary_loops(mesh)
        except GeometryError as exc:
            rep.add(f"road/{rid}", "boundary_loops", False, str(exc))
            continue
        want = 1 + len(per_segment.get(rid, []))
        rep.add(f"road/{rid}", "boundary_loop_count", len(loops) == want,
                f"{len(loops)} loops, expected {want}")
        if rid in polygons:
            ok = any(_loop_matches_polygon(mesh.vertices[lp, :2], polygons[rid]) for lp in loops)
            rep.add(f"road/{rid}", "outer_loop_matches_polygon", ok)

    for p in placements:
        did = defect_asset_id(p)
        name = f"defect/{did}"
        if did not in defects:
            rep.add(name, "present", False, "missing defect asset")
            continue
        mesh = defects[did]
        _basic_checks(rep, name, mesh)
        try:
            loops = extract_boundary_loops(mesh)
        except GeometryError as exc:
            rep.add(name, "boundary_loops", False, str(exc))
            continue
        rep.add(name, "boundary_loop_count", len(loops) == 1, f"{len(loops)} loops")
        if not loops:
            continue
        bset = {tuple(x) for x in mesh.vertices[loops[0]].tolist()}
        hosts = [rid for rid, rm in assets.roads
                 if bset <= {tuple(x) for x in rm.vertices.tolist()}]
        rep.add(name, "boundary_coincidence", hosts == [p.segment],
                f"hosts {hosts}, expected [{p.segment}]")
        host = roads.get(p.segment)
        if host is not None:
            n = _sampled_overlaps(mesh, host) + _sampled_overlaps(host, mesh)
            rep.add(name, "no_overlap_with_host", n == 0, f"{n} overlapping samples")

    ids = [rid for rid, _ in assets.roads]
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            n = _sampled_overlaps(roads[ids[i]], roads[ids[j]])
            if n:
                rep.add(f"road/{ids[i]}", f"no_overlap_with_road/{ids[j]}", False, f"{n} samples")
    seen = set()
    for gid in ids + [d for d, _ in assets.defects]:
        if gid in seen:
            rep.add(gid, "unique_id", False, "duplicate asset id")
        seen.add(gid)
    return rep


def _basic_checks(rep, name, mesh):
    try:
        mesh.check(compact=True)
        rep.add(name, "mesh_invariants", True)
    except GeometryError as exc:
        rep.add(name, "mesh_invariants", False, str(exc))
    if mesh.n_faces:
        comps = face_components(mesh.faces)
        rep.add(name, "single_component", comps.max() == 0, f"{comps.max() + 1} components")
        small = int(np.count_nonzero(mesh.face_areas() < 1e-12))
        rep.add(name, "no_degenerate_faces", small == 0, f"{small} degenerate")
    else:
        rep.add(name, "nonempty", False, "asset has no faces")


# ---------------------------------------------------------------- pipeline

def _hash_arrays(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def _segment_job(args):
    segment, placements, models, surface, confirm = args
    mesh = integrate_segment(segment, placements, models, confirm)
    return restore_elevation(mesh, surface, placements)


def resolve_threads(threads=None):
    if threads is None:
        threads = int(os.environ.get("ROADTWIN_THREADS", "1") or 1)
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


def generate_scene(segments, library, surface, count, master_seed, placement_config=None,
                   threads=1, confirm_rays=True, validate=True):
    """Full pipeline: placements, per-segment integration and elevation,
    disassembly and validation. Output is independent of ``threads``."""
    models = _model_lookup(library)
    placements = sample_placements(segments, models, count, master_seed, placement_config)
    by_seg = {s.id: [] for s in segments}
    for p in placements:
        by_seg[p.segment].append(p)
    jobs = []
    for s in segments:
        used = {p.defect: models[p.defect] for p in by_seg[s.id]}
        jobs.append((s, by_seg[s.id], used, surface, confirm_rays))
    threads = resolve_threads(threads)
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            meshes = list(pool.map(_segment_job, jobs))
    else:
        meshes = [_segment_job(j) for j in jobs]
    cfg = placement_config or PlacementConfig()
    manifest = {
        "tool_version": TOOL_VERSION,
        "master_seed": int(master_seed),
        "count": int(count),
        "placement_config": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
        "placements": [p.to_dict() for p in placements],
        "segments": [{"id": s.id, "polygon": s.polygon.tolist()} for s in segments],
        "provenance": {
            "segments_sha256": _hash_arrays(*[a for s in segments for a in (s.mesh.vertices, s.mesh.faces)]),
            "library_sha256": _hash_arrays(*[a for n in sorted(models)
                                             for a in (models[n].mesh.vertices, models[n].mesh.faces,
                                                       models[n].alignment)]),
            "surface_sha256": _hash_arrays(surface.mesh.vertices, surface.mesh.faces),
            "library_entries": sorted(models),
        },
    }
    assets = disassemble_assets([(s.id, m) for s, m in zip(segments, meshes)], placements, manifest)
    if validate:
        rep = validate_scene(assets)
        assets.manifest["validation"] = rep.to_dict()
    log.info("scene: %d segments, %d defects", len(segments), len(placements))
    return assets, placements, meshes
