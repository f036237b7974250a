"""Incremental Delaunay and constrained Delaunay triangulation in the plane.

Points are inserted in Hilbert order into a super-triangle, located by a
visibility walk and legalised by Lawson flips. Constraint edges (and the
convex hull edges, which belong to every triangulation) are recovered by
flipping the edges they cross, then the affected region is re-legalised
with the constraints locked.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .mesh import GeometryError, TriMesh
from .predicates import incircle, orient2d


class DuplicatePointsError(GeometryError):
    def __init__(self, pairs):
        self.pairs = pairs
        shown = ", ".join(f"{i}~{j}" for i, j in pairs[:10])
        more = "" if len(pairs) <= 10 else f" (+{len(pairs) - 10} more)"
        super().__init__(f"duplicate points: {shown}{more}")


class CollinearPointsError(GeometryError):
    pass


class ConstraintCrossingError(GeometryError):
    def __init__(self, first, second):
        self.first = tuple(int(v) for v in first)
        self.second = tuple(int(v) for v in second)
        super().__init__(f"constraint edges {self.first} and {self.second} cross")


def _hilbert_order(xy, bits=16):
    lo = xy.min(axis=0)
    span = float(max((xy.max(axis=0) - lo).max(), 1e-300))
    side = (1 << bits) - 1
    q = np.minimum((((xy - lo) / span) * side).astype(np.int64), side)
    x = q[:, 0].copy()
    y = q[:, 1].copy()
    d = np.zeros(len(xy), dtype=np.int64)
    s = 1 << (bits - 1)
    while s > 0:
        rx = (x & s) > 0
        ry = (y & s) > 0
        d += s * s * ((3 * rx) ^ ry)
        # rotate the quadrant
        flip = ~ry & rx
        x = np.where(flip, side - x, x)
        y = np.where(flip, side - y, y)
        swap = ~ry
        x, y = np.where(swap, y, x), np.where(swap, x, y)
        s >>= 1
    return np.lexsort((np.arange(len(xy)), d))


class _Triangulation:
    """Mutable triangle soup with neighbour links (-1 means none)."""

    def __init__(self, xy):
        n = len(xy)
        lo = xy.min(axis=0)
        hi = xy.max(axis=0)
        cx, cy = (lo + hi) / 2.0
        k = 10.0 * max(float((hi - lo).max()), 1.0)
        self.n = n
        self.x = [float(v) for v in xy[:, 0]] + [cx - 3 * k, cx + 3 * k, cx]
        self.y = [float(v) for v in xy[:, 1]] + [cy - k, cy - k, cy + 3 * k]
        self.tv = [[n, n + 1, n + 2]]
        self.tn = [[-1, -1, -1]]
        self.vt = [-1] * n + [0, 0, 0]
        self.locked = set()
        self.last = 0
        self._turn = 0

    # -- predicates on indices
    def orient(self, a, b, c):
        x, y = self.x, self.y
        return orient2d(x[a], y[a], x[b], y[b], x[c], y[c])

    def incircle_tri(self, t, d):
        x, y = self.x, self.y
        a, b, c = self.tv[t]
        return incircle(x[a], y[a], x[b], y[b], x[c], y[c], x[d], y[d])

    # -- structure edits
    def _set(self, t, verts, nbrs):
        self.tv[t] = verts
        self.tn[t] = nbrs
        for v in verts:
            self.vt[v] = t

    def _new(self, verts, nbrs):
        self.tv.append(None)
        self.tn.append(None)
        t = len(self.tv) - 1
        self._set(t, verts, nbrs)
        return t

    def _relink(self, t, old, new):
        if t >= 0:
            nb = self.tn[t]
            for i in range(3):
                if nb[i] == old:
                    nb[i] = new
                    return

    def flip(self, t, i):
        """Flip the edge of ``t`` opposite its i-th vertex; returns (t, u)."""
        tv, tn = self.tv, self.tn
        p = tv[t][i]
        a = tv[t][(i + 1) % 3]
        b = tv[t][(i + 2) % 3]
        x_pa = tn[t][(i + 2) % 3]
        x_bp = tn[t][(i + 1) % 3]
        u = tn[t][i]
        j = tn[u].index(t)
        q = tv[u][j]
        y_aq = tn[u][(j + 1) % 3]
        y_qb = tn[u][(j + 2) % 3]
        self._set(t, [p, a, q], [y_aq, u, x_pa])
        self._set(u, [p, q, b], [y_qb, x_bp, t])
        self._relink(y_aq, u, t)
        self._relink(x_bp, t, u)
        return t, u

    # -- point location and insertion
    def locate(self, p):
        x, y = self.x, self.y
        px, py = x[p], y[p]
        t = self.last
        tv, tn = self.tv, self.tn
        while True:
            v = tv[t]
            self._turn = (self._turn + 1) % 3
            moved = False
            for k in range(3):
                i = (k + self._turn) % 3
                a = v[(i + 1) % 3]
                b = v[(i + 2) % 3]
                if orient2d(x[a], y[a], x[b], y[b], px, py) < 0:
                    t = tn[t][i]
                    moved = True
                    break
            if moved:
                continue
            zeros = []
            for i in range(3):
                a = v[(i + 1) % 3]
                b = v[(i + 2) % 3]
                if orient2d(x[a], y[a], x[b], y[b], px, py) == 0:
                    zeros.append(i)
            return t, zeros

    def insert(self, p):
        t, zeros = self.locate(p)
        if len(zeros) >= 2:
            raise DuplicatePointsError([(p, self.tv[t][3 - zeros[0] - zeros[1]])])
        stack = []
        if not zeros:
            a, b, c = self.tv[t]
            na, nb, nc = self.tn[t]
            t1 = self._new([p, b, c], [na, -1, -1])
            t2 = self._new([p, c, a], [nb, -1, -1])
            self._set(t, [p, a, b], [nc, t1, t2])
            self.tn[t1][1] = t2
            self.tn[t1][2] = t
            self.tn[t2][1] = t
            self.tn[t2][2] = t1
            self._relink(na, t, t1)
            self._relink(nb, t, t2)
            stack = [(t, 0), (t1, 0), (t2, 0)]
        else:
            i = zeros[0]
            c = self.tv[t][i]
            a = self.tv[t][(i + 1) % 3]
            b = self.tv[t][(i + 2) % 3]
            n_ca = self.tn[t][(i + 2) % 3]  # across (c, a)
            n_bc = self.tn[t][(i + 1) % 3]  # across (b, c)
            u = self.tn[t][i]
            j = self.tn[u].index(t)
            d = self.tv[u][j]
            n_ad = self.tn[u][(j + 1) % 3]  # across (a, d)
            n_db = self.tn[u][(j + 2) % 3]  # across (d, b)
            if (min(a, b), max(a, b)) in self.locked:
                raise GeometryError("point inserted on a constraint edge")
            t0, t1 = t, u
            t2 = self._new([p, d, b], [n_db, -1, -1])
            t3 = self._new([p, b, c], [n_bc, -1, -1])
            self._set(t0, [p, c, a], [n_ca, t1, t3])
            self._set(t1, [p, a, d], [n_ad, t2, t0])
            self.tn[t2][1] = t3
            self.tn[t2][2] = t1
            self.tn[t3][1] = t0
            self.tn[t3][2] = t2
            self._relink(n_db, u, t2)
            self._relink(n_bc, t, t3)
            stack = [(t0, 0), (t1, 0), (t2, 0), (t3, 0)]
        while stack:
            t, i = stack.pop()
            u = self.tn[t][i]
            if u < 0:
                continue
            a = self.tv[t][(i + 1) % 3]
            b = self.tv[t][(i + 2) % 3]
            if (min(a, b), max(a, b)) in self.locked:
                continue
            q = self.tv[u][self.tn[u].index(t)]
            if self.incircle_tri(t, q) > 0:
                t, u = self.flip(t, i)
                stack.append((t, 0))
                stack.append((u, 0))
        self.last = t

    # -- edge queries
    def find_edge(self, a, b):
        """Return (t, i): triangle holding edge a-b and the index opposite it."""
        t0 = self.vt[a]
        for step in (1, 2):  # ccw, then cw when the fan is open
            t = t0
            while True:
                v = self.tv[t]
                k = v.index(a)
                if b in v:
                    return t, 3 - k - v.index(b)
                t = self.tn[t][(k + step) % 3]
                if t == t0:
                    return None
                if t < 0:
                    break
        return None

    def legalize_edges(self, edges):
        stack = list(edges)
        while stack:
            a, b = stack.pop()
            if (min(a, b), max(a, b)) in self.locked:
                continue
            hit = self.find_edge(a, b)
            if hit is None:
                continue
            t, i = hit
            u = self.tn[t][i]
            if u < 0:
                continue
            q = self.tv[u][self.tn[u].index(t)]
            if self.incircle_tri(t, q) > 0:
                t, u = self.flip(t, i)
                p, a2, q2 = self.tv[t]
                _, _, b2 = self.tv[u]
                stack.extend([(a2, q2), (p, a2), (q2, b2), (b2, p)])

    # -- constraint recovery
    def _trace(self, a, b):
        """Edges crossed by segment a->w, where w is b or the first vertex on a-b."""
        x, y = self.x, self.y
        t0 = t = self.vt[a]
        while True:
            v = self.tv[t]
            k = v.index(a)
            u = v[(k + 1) % 3]
            w = v[(k + 2) % 3]
            ou = self.orient(a, b, u)
            ow = self.orient(a, b, w)
            for cand, oc in ((u, ou), (w, ow)):
                if oc == 0 and cand < self.n:
                    if (x[cand] - x[a]) * (x[b] - x[a]) + (y[cand] - y[a]) * (y[b] - y[a]) > 0:
                        return [], cand
            if ou < 0 and ow > 0:
                break
            t = self.tn[t][(k + 1) % 3]
            if t == t0:
                raise GeometryError(f"cannot trace constraint {a}-{b}")
        right, left = u, w
        crossed = [(right, left)]
        t = self.tn[t][k]
        while True:
            v = self.tv[t]
            w = v[3 - v.index(right) - v.index(left)]
            if w == b:
                return crossed, b
            ow = self.orient(a, b, w)
            if ow == 0:
                return crossed, w
            if ow > 0:
                edge = (right, w)
                left = w
            else:
                edge = (w, left)
                right = w
            crossed.append(edge)
            t = self.tn[t][3 - v.index(edge[0]) - v.index(edge[1])]

    def insert_constraint(self, a, b):
        todo = [(a, b)]
        while todo:
            a, b = todo.pop()
            if a == b:
                continue
            if self.find_edge(a, b) is not None:
                self.locked.add((min(a, b), max(a, b)))
                continue
            crossed, w = self._trace(a, b)
            for e in crossed:
                key = (min(e), max(e))
                if key in self.locked:
                    raise ConstraintCrossingError((a, b), key)
            if w != b:
                todo.append((w, b))
            if crossed:
                self._recover(a, w, crossed)
            self.locked.add((min(a, w), max(a, w)))

    def _recover(self, a, b, crossed):
        queue = deque(crossed)
        fresh = []
        guard = 0
        limit = 50 * (len(crossed) + 10) ** 2
        while queue:
            guard += 1
            if guard > limit:
                raise GeometryError(f"constraint recovery did not converge for {a}-{b}")
            e0, e1 = queue.popleft()
            hit = self.find_edge(e0, e1)
            t, i = hit
            p = self.tv[t][i]
            u = self.tn[t][i]
            q = self.tv[u][self.tn[u].index(t)]
            o0 = self.orient(p, q, e0)
            o1 = self.orient(p, q, e1)
            if not ((o0 > 0 and o1 < 0) or (o0 < 0 and o1 > 0)):
                queue.append((e0, e1))
                continue
            self.flip(t, i)
            if p in (a, b) or q in (a, b):
                crosses = False
            else:
                s0 = self.orient(a, b, p)
                s1 = self.orient(a, b, q)
                crosses = (s0 > 0 and s1 < 0) or (s0 < 0 and s1 > 0)
            if crosses:
                queue.append((p, q))
            else:
                fresh.append((p, q))
        self.locked.add((min(a, b), max(a, b)))
        self.legalize_edges([e for e in fresh if {e[0], e[1]} != {a, b}])

    def triangles(self):
        n = self.n
        return [v for v in self.tv if v[0] < n and v[1] < n and v[2] < n]


def _check_points(xy):
    if xy.ndim != 2 or xy.shape[1] < 2:
        raise GeometryError("points must be an (n, 2) array")
    xy = np.ascontiguousarray(xy[:, :2], dtype=np.float64)
    if len(xy) < 3:
        raise GeometryError("need at least 3 points")
    if not np.all(np.isfinite(xy)):
        raise GeometryError("non-finite point coordinates")
    from scipy.spatial import cKDTree

    pairs = sorted(cKDTree(xy).query_pairs(1e-9))
    if pairs:
        raise DuplicatePointsError([(int(i), int(j)) for i, j in pairs])
    d = xy - xy[0]
    far = int(np.argmax(np.einsum("ij,ij->i", d, d)))
    e = xy[far] - xy[0]
    cross = e[0] * d[:, 1] - e[1] * d[:, 0]
    k = int(np.argmax(np.abs(cross)))
    if orient2d(xy[0, 0], xy[0, 1], xy[far, 0], xy[far, 1], xy[k, 0], xy[k, 1]) == 0:
        raise CollinearPointsError("all points are collinear")
    return xy


def _convex_hull(xy):
    """Monotone chain keeping collinear boundary points, ccw order."""
    order = np.lexsort((xy[:, 1], xy[:, 0])).tolist()
    x, y = xy[:, 0], xy[:, 1]

    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and orient2d(x[out[-2]], y[out[-2]], x[out[-1]], y[out[-1]],
                                             x[p], y[p]) < 0:
                out.pop()
            out.append(p)
        return out

    lower = chain(order)
    upper = chain(order[::-1])
    return lower[:-1] + upper[:-1]


def _check_crossings(xy, edges):
    if len(edges) < 2:
        return
    a = xy[edges[:, 0]]
    b = xy[edges[:, 1]]
    m = len(edges)
    for start in range(0, m, 512):
        sl = slice(start, min(m, start + 512))
        p, q = a[sl, None, :], b[sl, None, :]
        r, s = a[None, :, :], b[None, :, :]

        def orient(o, u, v):
            return ((u[..., 0] - o[..., 0]) * (v[..., 1] - o[..., 1])
                    - (u[..., 1] - o[..., 1]) * (v[..., 0] - o[..., 0]))

        d1 = orient(p, q, r)
        d2 = orient(p, q, s)
        d3 = orient(r, s, p)
        d4 = orient(r, s, q)
        proper = (d1 * d2 < 0) & (d3 * d4 < 0)
        shared = ((edges[sl, None, 0] == edges[None, :, 0]) | (edges[sl, None, 0] == edges[None, :, 1])
                  | (edges[sl, None, 1] == edges[None, :, 0]) | (edges[sl, None, 1] == edges[None, :, 1]))
        proper &= ~shared
        hits = np.argwhere(proper)
        if len(hits):
            i, j = hits[0]
            raise ConstraintCrossingError(edges[start + i], edges[j])


def _build(xy, constraints=()):
    tri = _Triangulation(xy)
    for p in _hilbert_order(xy).tolist():
        tri.insert(p)
    hull = _convex_hull(xy)
    for k in range(len(hull)):
        tri.insert_constraint(hull[k], hull[(k + 1) % len(hull)])
    for a, b in constraints:
        tri.insert_constraint(int(a), int(b))
    faces = np.array(tri.triangles(), dtype=np.int64).reshape(-1, 3)
    return faces, tri.locked


def _canonical(faces):
    if len(faces) == 0:
        return faces
    r = np.argmin(faces, axis=1)
    idx = (r[:, None] + np.arange(3)[None, :]) % 3
    faces = np.take_along_axis(faces, idx, axis=1)
    return faces[np.lexsort((faces[:, 2], faces[:, 1], faces[:, 0]))]


def _as_mesh(xy, faces):
    v = np.zeros((len(xy), 3))
    v[:, :2] = xy
    return TriMesh(v, _canonical(faces))


def delaunay_2d(points):
    """Delaunay triangulation of 2D points; returns a z=0 TriMesh.

    Vertex i of the result is input point i. Raises DuplicatePointsError for
    points closer than 1e-9 and CollinearPointsError for degenerate input.
    """
    xy = _check_points(np.asarray(points, dtype=np.float64))
    faces, _ = _build(xy)
    return _as_mesh(xy, faces)


def points_in_polygon(pts, poly):
    """Even-odd crossing test, vectorised over points (boundary undefined)."""
    pts = np.asarray(pts, dtype=np.float64)
    poly = np.asarray(poly, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    for ax, ay, bx, by in zip(x0, y0, x1, y1):
        cond = (ay > y) != (by > y)
        if not cond.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = ax + (y - ay) * (bx - ax) / (by - ay)
        inside ^= cond & (x < xc)
    return inside


def constrained_delaunay_2d(points, constraint_edges=(), holes=(), boundary=None):
    """Constrained Delaunay triangulation.

    ``constraint_edges`` are index pairs that must appear as edges.
    ``holes`` is a sequence of closed index loops (themselves constrained)
    whose interiors are removed; when ``boundary`` is a closed index loop,
    triangles outside it are removed too. Vertex i of the result is input
    point i; vertices left without faces are kept (see TriMesh.compact).
    """
    xy = _check_points(np.asarray(points, dtype=np.float64))
    loops = [list(map(int, h)) for h in holes]
    if boundary is not None:
        loops_all = loops + [list(map(int, boundary))]
    else:
        loops_all = loops
    edges = [tuple(map(int, e)) for e in constraint_edges]
    for loop in loops_all:
        edges.extend((loop[k], loop[(k + 1) % len(loop)]) for k in range(len(loop)))
    seen = set()
    uniq = []
    for a, b in edges:
        if a == b:
            continue
        key = (min(a, b), max(a, b))
        if key not in seen:
            seen.add(key)
            uniq.append(key)
    earr = np.array(uniq, dtype=np.int64).reshape(-1, 2)
    if len(earr) and (earr.min() < 0 or earr.max() >= len(xy)):
        raise GeometryError("constraint endpoint out of range")
    _check_crossings(xy, earr)
    faces, _ = _build(xy, uniq)
    if len(faces) and (loops or boundary is not None):
        cen = xy[faces].mean(axis=1)
        keep = np.ones(len(faces), dtype=bool)
        for loop in loops:
            keep &= ~points_in_polygon(cen, xy[loop])
        if boundary is not None:
            keep &= points_in_polygon(cen, xy[list(map(int, boundary))])
        faces = faces[keep]
    return _as_mesh(xy, faces)
