"""Readers and writers: PLY, OBJ, PGM grid/elevation maps, CSV."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .mesh import TriMesh


class FormatError(ValueError):
    """Base class for malformed input files."""


class PlyHeaderError(FormatError):
    pass


class PlyTruncatedError(FormatError):
    pass


class PlyPropertyError(FormatError):
    pass


class PgmError(FormatError):
    pass


class SidecarError(FormatError):
    pass


class ObjError(FormatError):
    pass


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


# ---------------------------------------------------------------- PLY

def _parse_ply_header(fh, path):
    first = fh.readline()
    if first.rstrip(b"\r\n") != b"ply":
        raise PlyHeaderError(f"{path}: missing 'ply' magic line")
    fmt = None
    elements = []
    while True:
        raw = fh.readline()
        if not raw:
            raise PlyHeaderError(f"{path}: header ends before end_header")
        line = raw.decode("ascii", errors="replace").strip()
        if not line or line.startswith(("comment", "obj_info")):
            continue
        tok = line.split()
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            if len(tok) != 3 or tok[1] not in ("ascii", "binary_little_endian") or tok[2] != "1.0":
                raise PlyHeaderError(f"{path}: unsupported format line '{line}'")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise PlyHeaderError(f"{path}: bad element line '{line}'")
            elements.append({"name": tok[1], "count": int(tok[2]), "props": []})
        elif tok[0] == "property":
            if not elements:
                raise PlyHeaderError(f"{path}: property before any element")
            if len(tok) == 5 and tok[1] == "list":
                for t in tok[2:4]:
                    if t not in _PLY_TYPES:
                        raise PlyPropertyError(f"{path}: unsupported list type '{t}'")
                elements[-1]["props"].append((tok[4], _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]]))
            elif len(tok) == 3:
                if tok[1] not in _PLY_TYPES:
                    raise PlyPropertyError(f"{path}: unsupported property type '{tok[1]}'")
                elements[-1]["props"].append((tok[2], _PLY_TYPES[tok[1]], None))
            else:
                raise PlyHeaderError(f"{path}: bad property line '{line}'")
        else:
            raise PlyHeaderError(f"{path}: unknown header keyword '{tok[0]}'")
    if fmt is None:
        raise PlyHeaderError(f"{path}: no format line")
    return fmt, elements


def _read_ascii_elements(fh, elements, path):
    tokens = fh.read().split()
    pos = 0
    out = {}
    for el in elements:
        data = {name: [] for name, _, _ in el["props"]}
        for row in range(el["count"]):
            for name, t, itype in el["props"]:
                try:
                    if itype is None:
                        data[name].append(tokens[pos])
                        pos += 1
                    else:
                        n = int(tokens[pos])
                        data[name].append(np.array(tokens[pos + 1:pos + 1 + n], dtype=itype))
                        if len(data[name][-1]) != n:
                            raise IndexError
                        pos += 1 + n
                except IndexError:
                    raise PlyTruncatedError(
                        f"{path}: element '{el['name']}' ends at row {row} of {el['count']}") from None
        for name, t, itype in el["props"]:
            if itype is None:
                data[name] = np.array(data[name], dtype=np.float64 if t[0] == "f" else np.int64).astype(t)
        out[el["name"]] = data
    return out


def _read_binary_elements(buf, elements, path):
    pos = 0
    out = {}
    for el in elements:
        props = el["props"]
        count = el["count"]
        data = {}
        if all(itype is None for _, _, itype in props):
            dt = np.dtype([(name, "<" + t) for name, t, _ in props])
            need = dt.itemsize * count
            if len(buf) - pos < need:
                raise PlyTruncatedError(
                    f"{path}: element '{el['name']}' needs {need} bytes, {len(buf) - pos} left")
            arr = np.frombuffer(buf, dtype=dt, count=count, offset=pos)
            pos += need
            for name, _, _ in props:
                data[name] = arr[name].copy()
        elif len(props) == 1 and _uniform_lists(buf, pos, props[0], count):
            name, t, itype = props[0]
            dt = np.dtype([("n", "<" + t), ("i", "<" + itype, (3,))])
            arr = np.frombuffer(buf, dtype=dt, count=count, offset=pos)
            pos += dt.itemsize * count
            data[name] = list(arr["i"].astype(np.int64))
        else:
            for name, _, _ in props:
                data[name] = []
            for row in range(count):
                for name, t, itype in props:
                    try:
                        if itype is None:
                            size = np.dtype(t).itemsize
                            if pos + size > len(buf):
                                raise IndexError
                            data[name].append(np.frombuffer(buf, "<" + t, 1, pos)[0])
                            pos += size
                        else:
                            csize = np.dtype(t).itemsize
                            if pos + csize > len(buf):
                                raise IndexError
                            n = int(np.frombuffer(buf, "<" + t, 1, pos)[0])
                            pos += csize
                            isize = np.dtype(itype).itemsize
                            if pos + n * isize > len(buf):
                                raise IndexError
                            data[name].append(np.frombuffer(buf, "<" + itype, n, pos).copy())
                            pos += n * isize
                    except IndexError:
                        raise PlyTruncatedError(
                            f"{path}: element '{el['name']}' ends at row {row} of {count}") from None
            for name, t, itype in props:
                if itype is None:
                    data[name] = np.array(data[name], dtype=t)
        out[el["name"]] = data
    return out


def _uniform_lists(buf, pos, prop, count):
    """True when every list in the element has exactly three entries."""
    _, t, itype = prop
    if itype is None or count == 0:
        return False
    dt = np.dtype([("n", "<" + t), ("i", "<" + itype, (3,))])
    if len(buf) - pos < dt.itemsize * count:
        return False
    return bool(np.all(np.frombuffer(buf, dtype=dt, count=count, offset=pos)["n"] == 3))


def read_ply(path):
    """Parse a PLY file into {element: {property: array or list of arrays}}."""
    path = Path(path)
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh, path)
        if fmt == "ascii":
            return _read_ascii_elements(fh, elements, path)
        return _read_binary_elements(fh.read(), elements, path)


def _xyz(data, path):
    v = data.get("vertex")
    if v is None:
        raise PlyPropertyError(f"{path}: no 'vertex' element")
    for k in "xyz":
        if k not in v:
            raise PlyPropertyError(f"{path}: vertex property '{k}' missing")
        if not isinstance(v[k], np.ndarray) or v[k].dtype.kind != "f":
            raise PlyPropertyError(f"{path}: vertex property '{k}' must be float32 or float64")
    return np.c_[v["x"].astype(np.float64), v["y"].astype(np.float64), v["z"].astype(np.float64)]


def read_ply_points(path):
    """(n, 3) float64 array from the vertex element of a PLY file."""
    return _xyz(read_ply(path), path)


def read_ply_mesh(path):
    data = read_ply(path)
    verts = _xyz(data, path)
    faces = np.zeros((0, 3), dtype=np.int64)
    if "face" in data:
        lists = next(iter(data["face"].values()))
        if any(len(f) != 3 for f in lists):
            raise PlyPropertyError(f"{path}: only triangular faces are supported")
        if lists:
            faces = np.array(lists, dtype=np.int64)
    return TriMesh(verts, faces)


def _ply_header(fmt, n_vertices, n_faces=None):
    lines = ["ply", f"format {fmt} 1.0", f"element vertex {n_vertices}",
             "property double x", "property double y", "property double z"]
    if n_faces is not None:
        lines += [f"element face {n_faces}", "property list uchar int vertex_indices"]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def write_ply(path, points, faces=None, binary=True):
    """Write points (and optional triangles) with 64-bit coordinates."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    f = None if faces is None else np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    fmt = "binary_little_endian" if binary else "ascii"
    with open(path, "wb") as fh:
        fh.write(_ply_header(fmt, len(pts), None if f is None else len(f)))
        if binary:
            fh.write(pts.astype("<f8").tobytes())
            if f is not None:
                rec = np.zeros(len(f), dtype=[("n", "u1"), ("i", "<i4", (3,))])
                rec["n"] = 3
                rec["i"] = f
                fh.write(rec.tobytes())
        else:
            fh.write("".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in pts.tolist()).encode("ascii"))
            if f is not None:
                fh.write("".join(f"3 {a} {b} {c}\n" for a, b, c in f.tolist()).encode("ascii"))


def write_ply_mesh(path, mesh, binary=True):
    write_ply(path, mesh.vertices, mesh.faces, binary=binary)


# ---------------------------------------------------------------- OBJ

def write_obj(assets, path):
    """One ``o`` record per asset, roads first then defects, ids sorted."""
    lines = ["# roadtwin scene assets"]
    base = 1
    for group, items in (("road", assets.roads), ("defect", assets.defects)):
        for aid, mesh in sorted(items, key=lambda it: it[0]):
            lines.append(f"o {group}/{aid}")
            lines.extend("v %.17g %.17g %.17g" % tuple(v) for v in mesh.vertices.tolist())
            lines.extend(f"f {a + base} {b + base} {c + base}" for a, b, c in mesh.faces.tolist())
            base += len(mesh.vertices)
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write OBJ to {path}: {exc.strerror}") from exc


def read_obj(path):
    """Return {object name: TriMesh} in file order."""
    objects = {}
    verts = []
    cur = None
    offset = {}
    with open(path, encoding="ascii") as fh:
        for n, line in enumerate(fh, 1):
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            if tok[0] == "o":
                cur = tok[1]
                objects[cur] = []
                offset[cur] = len(verts)
            elif tok[0] == "v":
                verts.append([float(t) for t in tok[1:4]])
            elif tok[0] == "f":
                if cur is None:
                    raise ObjError(f"{path}:{n}: face before any object")
                objects[cur].append([int(t.split("/")[0]) - 1 for t in tok[1:4]])
    allv = np.array(verts, dtype=np.float64).reshape(-1, 3)
    out = {}
    names = list(objects)
    for k, name in enumerate(names):
        lo = offset[name]
        hi = offset[names[k + 1]] if k + 1 < len(names) else len(allv)
        f = np.array(objects[name], dtype=np.int64).reshape(-1, 3) - lo
        out[name] = TriMesh(allv[lo:hi], f)
    return out


# ---------------------------------------------------------------- PGM

def _write_pgm(path, img, maxval):
    img = np.asarray(img)
    h, w = img.shape
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(img.astype(dtype).tobytes())


def _read_pgm(path, allowed_maxvals):
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmError(f"{path}: truncated PGM header")
        fields.append(data[start:pos])
    pos += 1
    if fields[0] != b"P5":
        raise PgmError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise PgmError(f"{path}: non-numeric PGM header") from None
    if maxval not in allowed_maxvals:
        raise PgmError(f"{path}: unsupported PGM maxval {maxval}")
    dtype = ">u2" if maxval > 255 else "u1"
    need = w * h * np.dtype(dtype).itemsize
    if len(data) - pos < need:
        raise PgmError(f"{path}: PGM body has {len(data) - pos} bytes, expected {need}")
    return np.frombuffer(data, dtype, w * h, pos).reshape(h, w).astype(np.int64)


def _sidecar(path):
    return Path(str(path) + ".json") if not str(path).endswith(".json") else Path(path)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


GRID_CODES = {0: 255, 1: 0, 2: 128}  # free, defect, off-road


def write_gridmap(grid, path):
    """Binary PGM (row i of the grid = image row i) plus ``<path>.json``."""
    img = np.vectorize(GRID_CODES.get)(grid.state) if grid.state.size else grid.state
    _write_pgm(path, img, 255)
    _write_json(_sidecar(path), {
        "resolution": grid.resolution,
        "origin": [float(v) for v in grid.origin],
        "width": grid.width,
        "height": grid.height,
        "codes": {"free": 255, "defect": 0, "off_road": 128},
    })


def _load_sidecar(path, keys):
    side = _sidecar(path)
    try:
        with open(side, encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise SidecarError(f"missing sidecar {side}") from None
    except json.JSONDecodeError as exc:
        raise SidecarError(f"{side}: invalid JSON ({exc.msg})") from None
    missing = [k for k in keys if k not in meta]
    if missing:
        raise SidecarError(f"{side}: missing keys {missing}")
    return meta


def read_gridmap(path):
    from .planning.grid import GridMap

    meta = _load_sidecar(path, ("resolution", "origin", "width", "height"))
    if not meta["resolution"] > 0:
        raise SidecarError(f"{_sidecar(path)}: resolution must be positive, got {meta['resolution']}")
    img = _read_pgm(path, (255,))
    if img.shape != (meta["height"], meta["width"]):
        raise SidecarError(f"{path}: PGM is {img.shape[1]}x{img.shape[0]} but sidecar says "
                           f"{meta['width']}x{meta['height']}")
    inverse = {v: k for k, v in GRID_CODES.items()}
    bad = set(np.unique(img).tolist()) - set(inverse)
    if bad:
        raise PgmError(f"{path}: unknown cell codes {sorted(bad)}")
    state = np.vectorize(inverse.get)(img).astype(np.int8) if img.size else img.astype(np.int8)
    return GridMap(state, meta["resolution"], np.array(meta["origin"], dtype=np.float64))


def write_elevation_map(emap, path, scale=1e-4, offset=-3.0, missing=0):
    """16-bit PGM: height = offset + scale * value, ``missing`` marks NaN."""
    h = emap.heights
    v = np.rint((h - offset) / scale)
    ok = ~np.isnan(h)
    if np.any(ok & ((v < 1) | (v > 65535))):
        raise ValueError("heights outside the encodable range for this scale/offset")
    img = np.where(ok, v, missing).astype(np.int64)
    _write_pgm(path, img, 65535)
    _write_json(_sidecar(path), {"cell_size": emap.cell_size,
                                 "origin": [float(o) for o in emap.origin],
                                 "scale": scale, "offset": offset, "missing": missing})


def read_elevation_map(path):
    from .model_creator import ElevationMap

    meta = _load_sidecar(path, ("cell_size", "origin", "scale", "offset"))
    if not meta["cell_size"] > 0:
        raise SidecarError(f"{_sidecar(path)}: cell_size must be positive")
    img = _read_pgm(path, range(1, 65536))
    h = meta["offset"] + meta["scale"] * img.astype(np.float64)
    miss = meta.get("missing")
    if miss is not None:
        h[img == miss] = np.nan
    return ElevationMap(h, meta["cell_size"], np.array(meta["origin"], dtype=np.float64))


def read_mask(path):
    """Binary mask PGM: any nonzero pixel is road."""
    return _read_pgm(path, range(1, 65536)) > 0


def write_mask(path, mask):
    _write_pgm(path, np.asarray(mask, dtype=bool).astype(np.uint8) * 255, 255)


# ---------------------------------------------------------------- CSV / JSON

def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def write_json(path, obj):
    _write_json(path, obj)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)


# ---------------------------------------------------------------- scenes

SCENE_OBJ = "scene.obj"
SCENE_MANIFEST = "manifest.json"


def write_scene(assets, directory, extra=None):
    """``scene.obj`` plus ``manifest.json`` (scene manifest merged with ``extra``)."""
    d = ensure_dir(directory)
    write_obj(assets, d / SCENE_OBJ)
    _write_json(d / SCENE_MANIFEST, {**assets.manifest, **(extra or {})})
    return d


def read_scene(directory):
    from .twin import SceneAssets

    d = Path(directory)
    obj = d / SCENE_OBJ
    if not obj.exists():
        raise FileNotFoundError(f"no {SCENE_OBJ} in {d}")
    try:
        with open(d / SCENE_MANIFEST, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise FileNotFoundError(f"no {SCENE_MANIFEST} in {d}") from None
    roads, defects = [], []
    for name, mesh in read_obj(obj).items():
        group, _, aid = name.partition("/")
        if group == "road":
            roads.append((aid, mesh))
        elif group == "defect":
            defects.append((aid, mesh))
        else:
            raise ObjError(f"{obj}: object '{name}' is neither road/ nor defect/")
    return SceneAssets(roads, defects, manifest)


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
