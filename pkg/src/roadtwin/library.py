"""On-disk road model library: binary PLY meshes plus ``manifest.json``."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .io import read_ply_mesh, write_json, write_ply_mesh
from .mesh import GeometryError
from .model_creator import DefectModel, SurfaceModel

MANIFEST = "manifest.json"
FORMAT_VERSION = 1


class LibraryError(ValueError):
    pass


class ModelLibrary:
    """Named DefectModel / SurfaceModel entries stored under one directory.

    Floats in the manifest are written with ``repr`` precision so transforms
    survive a save/load cycle bit for bit. Single writer; concurrent reads
    are fine.
    """

    def __init__(self, root):
        self.root = Path(root)
        self._entries = {}
        self._cache = {}
        if (self.root / MANIFEST).exists():
            self._load_manifest()

    @classmethod
    def create(cls, root):
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        lib = cls(root)
        lib._save_manifest()
        return lib

    def _load_manifest(self):
        path = self.root / MANIFEST
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LibraryError(f"{path}: invalid JSON ({exc.msg})") from None
        if doc.get("version") != FORMAT_VERSION:
            raise LibraryError(f"{path}: unsupported library version {doc.get('version')}")
        self._entries = dict(doc.get("entries", {}))
        for name, e in self._entries.items():
            f = self.root / e["mesh"]
            if not f.exists():
                raise LibraryError(f"library entry '{name}' references missing file {f}")

    def _save_manifest(self):
        write_json(self.root / MANIFEST, {"version": FORMAT_VERSION, "entries": self._entries})

    def list(self):
        """Manifest view: {name: {kind, metadata}} sorted by name."""
        return {n: {"kind": e["kind"], "metadata": e.get("metadata", {})}
                for n, e in sorted(self._entries.items())}

    def names(self, kind=None):
        return sorted(n for n, e in self._entries.items() if kind is None or e["kind"] == kind)

    def __contains__(self, name):
        return name in self._entries

    def __len__(self):
        return len(self._entries)

    def add(self, name, model):
        if not name or "/" in name or name.startswith("."):
            raise LibraryError(f"invalid entry name '{name}'")
        if name in self._entries:
            raise LibraryError(f"library already has an entry named '{name}'")
        self.root.mkdir(parents=True, exist_ok=True)
        mesh_file = f"{name}.ply"
        if isinstance(model, DefectModel):
            model.validate()
            entry = {"kind": "defect", "mesh": mesh_file, "boundary": list(model.boundary),
                     "alignment": model.alignment.tolist(), "metadata": model.metadata}
            mesh = model.mesh
        elif isinstance(model, SurfaceModel):
            model.validate()
            entry = {"kind": "surface", "mesh": mesh_file, "leveling": model.leveling.tolist(),
                     "metadata": {"vertices": model.mesh.n_vertices}}
            mesh = model.mesh
        else:
            raise LibraryError(f"cannot store {type(model).__name__}")
        write_ply_mesh(self.root / mesh_file, mesh)
        self._entries[name] = entry
        self._save_manifest()
        return self

    def get(self, name):
        if name not in self._entries:
            raise LibraryError(f"no library entry named '{name}'")
        if name in self._cache:
            return self._cache[name]
        e = self._entries[name]
        path = self.root / e["mesh"]
        if not path.exists():
            raise LibraryError(f"library entry '{name}' references missing file {path}")
        mesh = read_ply_mesh(path)
        try:
            if e["kind"] == "defect":
                model = DefectModel(mesh, e["boundary"], np.array(e["alignment"]), e["metadata"])
            else:
                model = SurfaceModel(mesh, np.array(e["leveling"]))
            model.validate()
        except GeometryError as exc:
            raise LibraryError(f"library entry '{name}' is invalid: {exc}") from None
        self._cache[name] = model
        return model

    def defects(self):
        """(name, DefectModel) pairs in name order."""
        return [(n, self.get(n)) for n in self.names("defect")]
