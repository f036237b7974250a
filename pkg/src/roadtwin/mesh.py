"""Indexed triangle meshes and the topology helpers built on them."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Raised when an input violates a geometric precondition."""


class NonManifoldEdgeError(GeometryError):
    def __init__(self, edge, count):
        self.edge = tuple(int(v) for v in edge)
        self.count = count
        super().__init__(f"edge {self.edge} is used by {count} faces")


@dataclass
class TriMesh:
    """Triangle mesh in meters.

    ``tags`` is an optional per-face integer label carried through
    integration (-1 marks road faces, k >= 0 the k-th placed defect).
    """

    vertices: np.ndarray
    faces: np.ndarray
    tags: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.tags is not None:
            self.tags = np.asarray(self.tags, dtype=np.int64).reshape(-1)
            if len(self.tags) != len(self.faces):
                raise GeometryError("tags must have one entry per face")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def copy(self):
        return TriMesh(self.vertices.copy(), self.faces.copy(),
                       None if self.tags is None else self.tags.copy())

    def check(self, compact=False):
        """Raise GeometryError when an invariant is broken."""
        if not np.all(np.isfinite(self.vertices)):
            raise GeometryError("non-finite vertex coordinates")
        f = self.faces
        if len(f) == 0:
            return
        if f.min() < 0 or f.max() >= len(self.vertices):
            raise GeometryError("face index out of range")
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise GeometryError("face with repeated vertex index")
        key = np.sort(f, axis=1)
        if len(np.unique(key, axis=0)) != len(f):
            raise GeometryError("duplicate face")
        if compact and len(np.unique(f)) != len(self.vertices):
            raise GeometryError("unreferenced vertices")

    def compact(self):
        """Drop unreferenced vertices; returns (mesh, old->new index map)."""
        used = np.zeros(len(self.vertices), dtype=bool)
        used[self.faces.ravel()] = True
        remap = np.full(len(self.vertices), -1, dtype=np.int64)
        remap[used] = np.arange(int(used.sum()))
        mesh = TriMesh(self.vertices[used], remap[self.faces],
                       None if self.tags is None else self.tags.copy())
        return mesh, remap

    def select_faces(self, mask):
        mask = np.asarray(mask)
        return TriMesh(self.vertices, self.faces[mask],
                       None if self.tags is None else self.tags[mask])

    def signed_areas_2d(self):
        v = self.vertices
        a, b, c = v[self.faces[:, 0]], v[self.faces[:, 1]], v[self.faces[:, 2]]
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                      - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    def area_2d(self):
        """Projected area, assuming no two faces overlap in the plane."""
        return float(np.abs(self.signed_areas_2d()).sum())

    def face_areas(self):
        v = self.vertices
        e1 = v[self.faces[:, 1]] - v[self.faces[:, 0]]
        e2 = v[self.faces[:, 2]] - v[self.faces[:, 0]]
        return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)

    def transformed(self, matrix):
        """Apply a 4x4 homogeneous transform to the vertices."""
        m = np.asarray(matrix, dtype=np.float64)
        v = self.vertices @ m[:3, :3].T + m[:3, 3]
        return TriMesh(v, self.faces.copy(), None if self.tags is None else self.tags.copy())


def edge_face_counts(faces):
    """Map each undirected edge (lo, hi) to the list of faces using it."""
    use = defaultdict(list)
    for fi, (a, b, c) in enumerate(np.asarray(faces).tolist()):
        for u, v in ((a, b), (b, c), (c, a)):
            use[(u, v) if u < v else (v, u)].append(fi)
    return use


def boundary_edges(faces):
    """Directed boundary edges (following face winding) as a list of pairs.

    Raises NonManifoldEdgeError when an edge is shared by three or more faces.
    """
    seen = {}
    count = defaultdict(int)
    for a, b, c in np.asarray(faces).tolist():
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            count[key] += 1
            seen[key] = (u, v)
    out = []
    for key, n in count.items():
        if n >= 3:
            raise NonManifoldEdgeError(key, n)
        if n == 1:
            out.append(seen[key])
    out.sort()
    return out


def extract_boundary_loops(mesh_or_faces):
    """Closed loops of boundary edges, each a list of vertex indices.

    Every edge used by exactly one face lands in exactly one loop. Loops
    follow the face winding; at vertices where several boundary edges meet
    the walk continues along the lowest-index unused edge.
    """
    faces = mesh_or_faces.faces if isinstance(mesh_or_faces, TriMesh) else mesh_or_faces
    edges = boundary_edges(faces)
    outgoing = defaultdict(list)
    for u, v in edges:
        outgoing[u].append(v)
    for u in outgoing:
        outgoing[u].sort()
    used = set()
    loops = []
    for u0, v0 in edges:
        if (u0, v0) in used:
            continue
        loop = [u0]
        used.add((u0, v0))
        cur = v0
        while cur != u0:
            loop.append(cur)
            nxt = None
            for w in outgoing.get(cur, ()):
                if (cur, w) not in used:
                    nxt = w
                    break
            if nxt is None:
                raise GeometryError(
                    f"boundary walk stuck at vertex {cur}; inconsistent face winding")
            used.add((cur, nxt))
            cur = nxt
        loops.append(loop)
    return loops


def pinch_vertices(faces):
    """Vertices where more than one boundary loop passes (or one passes twice)."""
    deg = defaultdict(int)
    for u, _ in boundary_edges(faces):
        deg[u] += 1
    return sorted(v for v, d in deg.items() if d > 1)


def face_components(faces):
    """Label faces by edge-connected component (labels ordered by first face)."""
    faces = np.asarray(faces)
    n = len(faces)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for flist in edge_face_counts(faces).values():
        r0 = find(flist[0])
        for other in flist[1:]:
            r = find(other)
            if r != r0:
                parent[max(r, r0)] = min(r, r0)
                r0 = min(r, r0)
    roots = [find(i) for i in range(n)]
    relabel = {}
    labels = np.empty(n, dtype=np.int64)
    for i, r in enumerate(roots):
        labels[i] = relabel.setdefault(r, len(relabel))
    return labels


def polygon_area(poly):
    """Signed shoelace area of a closed 2D polyline (last point not repeated)."""
    p = np.asarray(poly, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def weld_vertices(mesh, tol=1e-6, candidates=None):
    """Merge vertices closer than ``tol``; the lower index survives.

    ``candidates`` restricts merging to the given vertex indices. Returns
    (welded mesh, list of merged (kept, removed) pairs).
    """
    from scipy.spatial import cKDTree

    v = mesh.vertices
    idx = np.arange(len(v)) if candidates is None else np.unique(np.asarray(candidates))
    tree = cKDTree(v[idx])
    pairs = sorted((int(idx[i]), int(idx[j])) for i, j in tree.query_pairs(tol))
    target = np.arange(len(v))
    for a, b in pairs:
        ra, rb = target[a], target[b]
        while target[ra] != ra:
            ra = target[ra]
        while target[rb] != rb:
            rb = target[rb]
        if ra != rb:
            target[max(ra, rb)] = min(ra, rb)
    for i in range(len(target)):
        r = i
        while target[r] != r:
            r = target[r]
        target[i] = r
    faces = target[mesh.faces]
    merged = [(int(target[i]), int(i)) for i in range(len(v)) if target[i] != i]
    welded, _ = TriMesh(v, faces, mesh.tags).compact()
    return welded, merged
