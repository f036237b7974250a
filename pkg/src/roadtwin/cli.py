"""Command-line entry point: ``roadtwin <command> [--config f] [--set k=v] ...``.

Exit status is 0 on success, 1 on a domain or configuration error and 2
on a usage error. Each command prints one summary line; logs go to a file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io as rio
from .config import ConfigError, build_config, config_dict
from .library import LibraryError, ModelLibrary
from .mesh import GeometryError
from .twin import TOOL_VERSION, PlacementError

log = logging.getLogger("roadtwin")

DOMAIN_ERRORS = (ConfigError, GeometryError, rio.FormatError, LibraryError, PlacementError,
                 RuntimeError, ValueError, OSError)


def _run_manifest(command, cfg, seed, inputs=(), **extra):
    doc = {"command": command, "tool_version": TOOL_VERSION, "seed": seed,
           "config": config_dict(cfg),
           "inputs": {str(p): rio.file_sha256(p) for p in inputs}}
    doc.update(extra)
    return doc


# ---------------------------------------------------------------- commands

def cmd_reconstruct_surface(cfg, args):
    from .model_creator import (RegisteredCloud, SemanticMask, filter_points_by_mask,
                                fuse_clouds, level_to_ground, reconstruct_surface)

    seed = 0 if args.seed is None else args.seed
    clouds = []
    for k, p in enumerate(cfg.clouds):
        c = RegisteredCloud(rio.read_ply_points(p))
        if cfg.masks:
            m = cfg.masks[k]
            c = filter_points_by_mask(c, SemanticMask(rio.read_mask(m["mask"]), m["projection"]))
        log.info("cloud %s: %d points kept", p, len(c))
        clouds.append(c)
    fused = fuse_clouds(clouds)
    leveling = np.eye(4)
    if cfg.level:
        fused, leveling = level_to_ground(fused, seed=seed, inlier_tol=cfg.inlier_tol)
    surface = reconstruct_surface(fused, cfg.leaf, leveling)
    out = rio.ensure_dir(args.out)
    ModelLibrary(out / "library").add(cfg.name, surface)
    inputs = list(cfg.clouds) + [m["mask"] for m in cfg.masks]
    rio.write_json(out / "manifest.json", _run_manifest(
        "reconstruct-surface", cfg, seed, inputs, vertices=surface.mesh.n_vertices,
        faces=surface.mesh.n_faces, leveling=leveling.tolist()))
    return (f"reconstruct-surface: {surface.mesh.n_vertices} vertices, "
            f"{surface.mesh.n_faces} faces -> {out / 'library'}")


def cmd_reconstruct_defect(cfg, args):
    from .model_creator import reconstruct_defects

    emap = rio.read_elevation_map(cfg.elevation)
    models = reconstruct_defects(emap, cfg.depth_threshold, cfg.min_area, cfg.stride, cfg.allow_bumps)
    out = rio.ensure_dir(args.out)
    lib = ModelLibrary(out / "library")
    names = []
    for k, m in enumerate(models):
        name = f"{cfg.prefix}_{k:02d}"
        lib.add(name, m)
        names.append(name)
        log.info("%s: depth %.4f m, area %.5f m^2", name, m.metadata["max_depth"], m.metadata["area"])
    rio.write_json(out / "manifest.json", _run_manifest(
        "reconstruct-defect", cfg, args.seed, [cfg.elevation], entries=names))
    return f"reconstruct-defect: {len(models)} defect models -> {out / 'library'}"


def cmd_library(cfg, args):
    if args.action == "add":
        if not cfg.source:
            raise ConfigError("library add needs source=<library dir>")
        src = ModelLibrary(cfg.source)
        if not (Path(cfg.source) / "manifest.json").exists():
            raise LibraryError(f"{cfg.source} is not a model library")
        lib = ModelLibrary(cfg.library)
        names = cfg.names or src.names()
        for n in names:
            lib.add(n, src.get(n))
        return f"library add: {len(names)} entries -> {cfg.library} ({len(lib)} total)"
    if not (Path(cfg.library) / "manifest.json").exists():
        raise LibraryError(f"{cfg.library} is not a model library")
    entries = ModelLibrary(cfg.library).list()
    desc = ", ".join(f"{n}:{e['kind']}" for n, e in entries.items())
    return f"library list: {len(entries)} entries" + (f" ({desc})" if desc else "")


def _load_segments(source):
    from .desk import desk_segments
    from .twin import RoadSegment

    if source == "desk":
        return desk_segments()
    doc = json.loads(Path(source).read_text(encoding="utf-8"))
    segs = []
    for s in doc.get("segments", []):
        x0, y0, x1, y1 = s["rect"]
        segs.append(RoadSegment.rectangle(str(s["id"]), x0, y0, x1, y1, s.get("cell", 1.0)))
    if not segs:
        raise ConfigError(f"{source}: no segments")
    return segs


def cmd_generate_scene(cfg, args):
    from .desk import desk_defects, desk_surface
    from .twin import PlacementConfig, generate_scene

    seed = 0 if args.seed is None else args.seed
    segments = _load_segments(cfg.segments)
    if cfg.library == "desk":
        library, surface = desk_defects(), desk_surface()
    else:
        lib = ModelLibrary(cfg.library)
        library, surface = lib, lib.get(cfg.surface)
    pc = PlacementConfig(cfg.scale_min, cfg.scale_max, cfg.yaw_min, cfg.yaw_max, cfg.max_attempts)
    assets, placements, _ = generate_scene(segments, library, surface, cfg.count, seed, pc,
                                           threads=cfg.threads, confirm_rays=cfg.confirm_rays,
                                           validate=cfg.validate)
    cfg_doc = config_dict(cfg)
    cfg_doc.pop("threads")  # parallelism does not change the output
    rio.write_scene(assets, args.out, {"command": "generate-scene", "config": cfg_doc})
    status = "skipped"
    if cfg.validate:
        status = "passed" if assets.manifest["validation"]["passed"] else "FAILED"
    return (f"generate-scene: {len(assets.roads)} roads, {len(assets.defects)} defects, "
            f"validation {status} -> {args.out}")


def cmd_validate(cfg, args):
    from .twin import validate_scene

    assets = rio.read_scene(cfg.scene)
    rep = validate_scene(assets)
    out = rio.ensure_dir(args.out)
    rio.write_json(out / "validation.json", rep.to_dict())
    for f in rep.failures():
        log.warning("%s %s: %s", f["asset"], f["check"], f["detail"])
    if not rep.passed:
        raise GeometryError(f"validation failed: {len(rep.failures())} of {len(rep.checks)} checks")
    return f"validate: {len(rep.checks)} checks passed for {cfg.scene}"


def cmd_rasterize(cfg, args):
    from .planning.grid import rasterize_scene
    from .planning.scenario import Scenario

    if cfg.scene:
        grid = rasterize_scene(rio.read_scene(cfg.scene), cfg.resolution, margin=cfg.margin)
        inputs = [Path(cfg.scene) / "manifest.json", Path(cfg.scene) / "scene.obj"]
    else:
        sc = Scenario.load(cfg.scenario or None)
        sc.resolution = cfg.resolution
        grid = sc.grid()
        inputs = [cfg.scenario] if cfg.scenario else []
    out = rio.ensure_dir(args.out)
    rio.write_gridmap(grid, out / "gridmap.pgm")
    rio.write_json(out / "manifest.json", _run_manifest("rasterize", cfg, args.seed, inputs))
    n_def = int((grid.state == 1).sum())
    return f"rasterize: {grid.width}x{grid.height} cells, {n_def} defect cells -> {out / 'gridmap.pgm'}"


def cmd_plan(cfg, args):
    from .planning.metrics import evaluate_path
    from .planning.scenario import PLANNERS, Scenario, path_rows, run_planner
    from .svg import path_plot

    sc = Scenario.load(cfg.scenario or None)
    sc.rrtstar = {**sc.rrtstar, "max_iters": cfg.rrtstar_iters}
    if args.seed is not None:
        sc.rrtstar["seed"] = args.seed
    grid = sc.grid()
    names = PLANNERS if cfg.planner == "all" else (cfg.planner,)
    out = rio.ensure_dir(args.out)
    rows, paths = [], {}
    for name in names:
        t0 = time.perf_counter()
        path = run_planner(name, sc, grid)
        dt = time.perf_counter() - t0
        m = evaluate_path(path, grid, sc.vehicle, sc.reference_length)
        log.info("%s: %d poses in %.2f s, %s", name, len(path.poses), dt, m.to_dict())
        rows.append([name, m.deviation, m.smoothness, m.clearance, int(m.clearance_capped)])
        rio.write_csv(out / f"path_{name}.csv", ["s", "x", "y", "yaw"], path_rows(path))
        paths[name] = path.poses
    rio.write_csv(out / "metrics.csv",
                  ["planner", "deviation_pct", "smoothness_rad_per_m", "clearance_m", "clearance_capped"],
                  rows)
    if cfg.svg:
        path_plot(out / "paths.svg", grid, paths, title=sc.name)
    rio.write_gridmap(grid, out / "gridmap.pgm")
    rio.write_json(out / "manifest.json", _run_manifest(
        "plan", cfg, args.seed, [cfg.scenario] if cfg.scenario else [],
        scenario=sc.name, rrtstar=sc.rrtstar))
    best = min(rows, key=lambda r: r[2])
    return f"plan: {len(rows)} planner(s) on {sc.name}, smoothest {best[0]} ({best[2]:.4f} rad/m) -> {out}"


def cmd_vibration_sweep(cfg, args):
    from .svg import line_chart
    from .vibration import SimParams, Suspension, pit_scene, sweep_scene

    params = SimParams(None if cfg.model == "kinematic" else Suspension(cfg.frequency, cfg.damping))
    runs = []
    if cfg.scene:
        assets = rio.read_scene(cfg.scene)
        runs.append(("scene", assets, cfg.start, cfg.end))
    else:
        for k, d in enumerate(cfg.defects):
            mesh, a, b = pit_scene(d["depth"], d["length"], width=d.get("width", 1.0))
            runs.append((str(d.get("id", f"pit{k}")), mesh, a, b))
    out = rio.ensure_dir(args.out)
    rows, series, argmins = [], {}, {}
    for did, scene, a, b in runs:
        res = sweep_scene(scene, a, b, cfg.speeds, cfg.alpha, params, ds=cfg.ds, defect_id=did)
        for r in res.rows:
            rows.append([did, r.speed, r.g_rms, r.g_peak])
        series[did] = ([r.speed for r in res.rows], [r.g_rms for r in res.rows])
        argmins[did] = res.argmin_speed
        log.info("%s: g_rms %s, argmin %s km/h", did, [round(r.g_rms, 4) for r in res.rows],
                 res.argmin_speed)
    rio.write_csv(out / "sweep.csv", ["defect", "speed_kmh", "g_rms", "g_peak"], rows)
    line_chart(out / "sweep.svg", series, "vibration degree vs speed", "speed (km/h)", "g_rms")
    inputs = [Path(cfg.scene) / "scene.obj"] if cfg.scene else []
    rio.write_json(out / "manifest.json", _run_manifest("vibration-sweep", cfg, args.seed, inputs,
                                                        argmin_speed=argmins))
    desc = ", ".join(f"{k} argmin {v:g} km/h" for k, v in argmins.items())
    return f"vibration-sweep: {desc} -> {out}"


COMMANDS = {
    "reconstruct-surface": cmd_reconstruct_surface,
    "reconstruct-defect": cmd_reconstruct_defect,
    "library": cmd_library,
    "generate-scene": cmd_generate_scene,
    "validate": cmd_validate,
    "rasterize": cmd_rasterize,
    "plan": cmd_plan,
    "vibration-sweep": cmd_vibration_sweep,
}

HELP = {
    "reconstruct-surface": "mesh a road surface from PLY clouds into a one-entry library",
    "reconstruct-defect": "build defect models from an elevation map",
    "library": "add entries to or list a model library",
    "generate-scene": "place defects into road segments and export OBJ + manifest",
    "validate": "check a generated scene directory",
    "rasterize": "write the planning grid map of a scenario or scene",
    "plan": "run path planners on a scenario and write metrics",
    "vibration-sweep": "vibration degree over a range of speeds",
}


def _common(p):
    p.add_argument("--config", metavar="PATH", help="JSON config for this command")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides",
                   help="override one config key (JSON literal or string); repeatable")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--out", metavar="DIR", default=None, help="output directory")
    p.add_argument("--log-file", metavar="PATH", default="roadtwin.log", help="log file (appended)")


def build_parser():
    parser = argparse.ArgumentParser(prog="roadtwin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        if name == "library":
            p.add_argument("action", choices=("add", "list"))
        _common(p)
    return parser


def _setup_logging(path):
    root = logging.getLogger("roadtwin")
    for h in list(root.handlers):
        root.removeHandler(h)
        h.close()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    h = logging.FileHandler(path, encoding="utf-8")
    h.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root.addHandler(h)
    root.setLevel(logging.INFO)
    root.propagate = False
    return h


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.out is None:
        args.out = str(Path("out") / args.command)
    handler = _setup_logging(args.log_file)
    try:
        log.info("run %s %s", args.command, " ".join(argv if argv is not None else sys.argv[1:]))
        cfg = build_config(args.command, args.config, args.overrides)
        summary = COMMANDS[args.command](cfg, args)
    except DOMAIN_ERRORS as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        print(f"roadtwin {args.command}: error: {exc}", file=sys.stderr)
        return 1
    finally:
        handler.flush()
    log.info("%s", summary)
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
