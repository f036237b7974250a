import pickle

import numpy as np
import pytest
import shapely
from shapely.geometry import Polygon

from roadtwin.desk import desk_scene
from roadtwin.geometry import nearest_height
from roadtwin.mesh import TriMesh, extract_boundary_loops, polygon_area
from roadtwin.model_creator import (
    ElevationMap, RegisteredCloud, build_defect_model, extract_defect_instances,
    reconstruct_surface, sample_defect_points,
)
from roadtwin.twin import (
    CutError, Placement, PlacementConfig, PlacementError, RoadSegment, SceneAssets,
    _placed_boundary, _sampled_overlaps, cut_hole, disassemble_assets, generate_scene,
    integrate_defect, integrate_segment, overlapping_faces, restore_elevation,
    sample_placements, validate_scene,
)


def square_defect(inner=7, depth=0.05, cell=0.01):
    size = inner + 6
    h = np.zeros((size, size))
    h[3:3 + inner, 3:3 + inner] = -depth
    emap = ElevationMap(h, cell)
    s = sample_defect_points(emap, extract_defect_instances(emap)[0])
    return build_defect_model(s, emap=emap)


def flat_surface(z, extent=(-1, -1, 3, 3), spacing=0.25):
    g = np.arange(extent[0], extent[2] + 1e-9, spacing)
    gx, gy = np.meshgrid(g, g)
    pts = np.c_[gx.ravel() + 0.01, gy.ravel() + 0.01, np.full(gx.size, 0.0)]
    pts[:, 2] = z(pts[:, 0])
    return reconstruct_surface(RegisteredCloud(pts), leaf=spacing)


def place(defect, pos, index=0, yaw=0.0, scale=1.0, seg="s"):
    return Placement(index, defect, seg, tuple(pos), yaw, scale, (0, index))


SEG = RoadSegment.rectangle("s", 0.0, 0.0, 1.6, 1.6, cell=0.1)


# cutting

def test_cut_inside_one_face():
    seg = RoadSegment.rectangle("g", 0, 0, 3, 3, cell=1.0)
    poly = np.array([[1.6, 1.1], [1.9, 1.1], [1.9, 1.4]])
    cut, removed = cut_hole(seg.mesh, poly)
    assert len(removed) == 1 and cut.n_faces == seg.mesh.n_faces - 1
    assert len(extract_boundary_loops(cut)) == 2


def test_cut_whole_interior():
    seg = RoadSegment.rectangle("g", 0, 0, 3, 3, cell=1.0)
    poly = np.array([[1.05, 1.05], [1.95, 1.05], [1.95, 1.95], [1.05, 1.95]])
    cut, removed = cut_hole(seg.mesh, poly)
    assert len(removed) == 2 and cut.n_faces == 16


def test_cut_touching_outer_boundary_fails():
    seg = RoadSegment.rectangle("q", 0, 0, 1, 1, cell=1.0)
    with pytest.raises(CutError, match="outer boundary"):
        cut_hole(seg.mesh, np.array([[0.6, 0.1], [0.9, 0.1], [0.9, 0.4]]))


@pytest.mark.parametrize("seed", range(8))
def test_cut_matches_brute_force(seed):
    # 16 x 16 cells, two faces each: 512 faces
    rng = np.random.default_rng(seed)
    seg = RoadSegment.rectangle("g", 0, 0, 16, 16, cell=1.0)
    lo = rng.uniform(2.5, 8.0, 2)
    pts = rng.uniform(lo, lo + rng.uniform(0.5, 5.5, 2), (8, 2))
    hull = shapely.convex_hull(shapely.multipoints(pts))
    poly = np.asarray(hull.exterior.coords)[:-1]
    tris = seg.mesh.vertices[seg.mesh.faces][:, :, :2]
    brute = [k for k, t in enumerate(tris) if Polygon(t).intersects(hull)]
    assert seg.mesh.n_faces == 512
    assert overlapping_faces(seg.mesh, poly).tolist() == brute
    _, removed = cut_hole(seg.mesh, poly)
    assert removed.tolist() == brute


# stitching

def test_square_defect_area_and_loops():
    d = square_defect()
    cut, _ = cut_hole(SEG.mesh, _placed_boundary(d, (0.8, 0.8), 0.0, 1.0))
    cut = TriMesh(cut.vertices, cut.faces, np.full(cut.n_faces, -1))
    out = integrate_defect(cut, d, place("sq", (0.8, 0.8)))
    assert len(extract_boundary_loops(out)) == 1
    assert abs(out.area_2d() - SEG.area) <= 1e-9 * SEG.area


def test_weld_pair_count():
    d = square_defect(inner=7)
    assert len(d.boundary) == 32
    cut, _ = cut_hole(SEG.mesh, _placed_boundary(d, (0.8, 0.8), 0.3, 1.0))
    cut = TriMesh(cut.vertices, cut.faces, np.full(cut.n_faces, -1))
    stats = {}
    integrate_defect(cut, d, place("sq", (0.8, 0.8), yaw=0.3), stats=stats)
    assert stats["weld_pairs"] == 32


def test_two_defects_one_segment():
    d = square_defect()
    models = {"sq": d}
    ps = [place("sq", (0.4, 0.5), 0, yaw=0.2), place("sq", (1.2, 1.1), 1, yaw=1.0, scale=1.3)]
    mesh = integrate_segment(SEG, ps, models)
    assert len(extract_boundary_loops(mesh)) == 1
    assets = disassemble_assets([("s", mesh)], ps)
    road = assets.road("s")
    for _, dm in assets.defects:
        assert _sampled_overlaps(dm, road) == 0 and _sampled_overlaps(road, dm) == 0
    a, b = (m for _, m in assets.defects)
    assert _sampled_overlaps(a, b) == 0


# elevation

def test_flat_surface_shift():
    d = square_defect()
    p = place("sq", (0.8, 0.8))
    mesh = integrate_segment(SEG, [p], {"sq": d})
    out = restore_elevation(mesh, flat_surface(lambda x: np.full_like(x, 0.2)), [p])
    assert np.array_equal(out.vertices[:, 2], mesh.vertices[:, 2] + 0.2)


def test_tilted_surface_depth_preserved():
    seg = RoadSegment.rectangle("t", 9.0, 0.0, 11.0, 2.0, cell=0.1)
    d = square_defect()
    p = place("sq", (10.0, 1.0), seg="t")
    surf = flat_surface(lambda x: 0.01 * x, extent=(8, -1, 12, 3))
    mesh = integrate_segment(seg, [p], {"sq": d})
    out = restore_elevation(mesh, surf, [p])
    assets = disassemble_assets([("t", out)], [p])
    dm = assets.defects[0][1]
    loop = extract_boundary_loops(dm)[0]
    off = nearest_height(surf, np.array([10.0, 1.0]))
    assert np.allclose(dm.vertices[loop, 2], off, atol=0, rtol=0)
    depth = dm.vertices[loop, 2].mean() - dm.vertices[:, 2].min()
    assert abs(depth - d.metadata["max_depth"]) < 1e-9


def test_empty_placements_pure_lookup():
    surf = flat_surface(lambda x: 0.03 * np.sin(x))
    mesh = integrate_segment(SEG, [], {})
    out = restore_elevation(mesh, surf, [])
    assert np.array_equal(out.vertices[:, 2], nearest_height(surf, mesh.vertices[:, :2]))


# placement

def test_sample_count_zero_and_empty_library():
    assert sample_placements([SEG], {"sq": square_defect()}, 0, 1) == []
    with pytest.raises(ValueError):
        sample_placements([SEG], {}, 1, 1)


def test_tight_segment_placement():
    d = square_defect()
    bxy = _placed_boundary(d, (0.0, 0.0), 0.0, 1.0)
    lo, hi = bxy.min(axis=0) - 0.01, bxy.max(axis=0) + 0.01
    seg = RoadSegment.rectangle("tight", lo[0], lo[1], hi[0], hi[1], cell=1.0)
    cfg = PlacementConfig(1.0, 1.0, 0.0, 0.0, require_cuttable=False)
    [p] = sample_placements([seg], {"sq": d}, 1, 9, cfg)
    poly = Polygon(_placed_boundary(d, p.position, p.yaw, p.scale))
    assert Polygon(seg.polygon).contains_properly(poly)
    assert np.all(np.abs(np.asarray(p.position)) <= 0.01)


def test_infeasible_placement_reports_count():
    d = square_defect()
    seg = RoadSegment.rectangle("small", 0, 0, 0.05, 0.05, cell=0.05)
    with pytest.raises(PlacementError) as exc:
        sample_placements([seg], {"sq": d}, 3, 0, PlacementConfig(max_attempts=5))
    assert exc.value.achieved == 0 and exc.value.requested == 3


def test_placements_independent_of_order():
    segs, defs, _ = desk_scene()
    a = sample_placements(segs, defs, 12, 5)
    b = sample_placements(segs, list(reversed(defs)), 12, 5)
    assert [p.to_dict() for p in a] == [p.to_dict() for p in b]


def test_config_ranges():
    with pytest.raises(ValueError):
        PlacementConfig(scale_min=0.0)
    with pytest.raises(ValueError):
        PlacementConfig(yaw_min=1.0, yaw_max=0.0)


# full pipeline

@pytest.fixture(scope="module")
def desk():
    segs, defs, surf = desk_scene()
    assets, placements, meshes = generate_scene(segs, defs, surf, 50, 42, threads=1)
    return segs, dict(defs), surf, assets, placements, meshes


def test_desk_counts_and_validation(desk):
    segs, _, _, assets, placements, _ = desk
    assert len(assets.roads) == 20 and len(assets.defects) == 50
    assert len(assets.manifest["placements"]) == 50
    assert assets.manifest["validation"]["passed"]


def test_desk_boundary_closure_and_area(desk):
    segs, _, _, assets, placements, meshes = desk
    for seg, mesh in zip(segs, meshes):
        loops = extract_boundary_loops(mesh)
        assert len(loops) == 1 and seg.outer_loop_ok(mesh)
        mine = [p for p in placements if p.segment == seg.id]
        road = assets.road(seg.id)
        holes = sum(abs(polygon_area(assets.defect(f"{p.index:04d}").vertices[
            extract_boundary_loops(assets.defect(f"{p.index:04d}"))[0], :2])) for p in mine)
        assert abs(road.area_2d() + holes - seg.area) <= 1e-6 * seg.area


def test_desk_depth_preserved(desk):
    _, models, _, assets, placements, _ = desk
    for p in placements:
        dm = assets.defect(f"{p.index:04d}")
        loop = extract_boundary_loops(dm)[0]
        depth = dm.vertices[loop, 2].mean() - dm.vertices[:, 2].min()
        assert abs(depth - models[p.defect].metadata["max_depth"] * p.scale) < 1e-9


def test_desk_shared_boundary(desk):
    _, _, _, assets, placements, _ = desk
    p = placements[0]
    dm = assets.defect(f"{p.index:04d}")
    road = assets.road(p.segment)
    common = {tuple(v) for v in dm.vertices.tolist()} & {tuple(v) for v in road.vertices.tolist()}
    loop = extract_boundary_loops(dm)[0]
    assert common == {tuple(v) for v in dm.vertices[loop].tolist()}


def test_no_defects_empty_group():
    segs, defs, surf = desk_scene()
    assets, _, _ = generate_scene(segs[:2], defs, surf, 0, 1)
    assert assets.defects == [] and len(assets.roads) == 2 and assets.manifest["validation"]["passed"]


def test_threads_do_not_change_output(desk):
    segs, models, surf, assets, _, meshes = desk
    again, _, meshes2 = generate_scene(segs, list(models.items()), surf, 50, 42, threads=2)
    assert pickle.dumps(again.manifest) == pickle.dumps(assets.manifest)
    for a, b in zip(meshes, meshes2):
        assert a.vertices.tobytes() == b.vertices.tobytes() and a.faces.tobytes() == b.faces.tobytes()


def _with(assets, roads=None, defects=None):
    return SceneAssets(roads or list(assets.roads), defects or list(assets.defects), assets.manifest)


def test_fault_deleted_face(desk):
    assets = desk[3]
    rid, mesh = assets.roads[3]
    broken, _ = TriMesh(mesh.vertices, np.delete(mesh.faces, mesh.n_faces // 2, axis=0)).compact()
    roads = list(assets.roads)
    roads[3] = (rid, broken)
    rep = validate_scene(_with(assets, roads=roads))
    assert not rep.passed
    assert any(f["check"] == "boundary_loop_count" and f["asset"] == f"road/{rid}" for f in rep.failures())


def test_fault_shifted_defect(desk):
    assets = desk[3]
    did, mesh = assets.defects[7]
    moved = TriMesh(mesh.vertices + np.array([0.001, 0.0, 0.0]), mesh.faces)
    defects = list(assets.defects)
    defects[7] = (did, moved)
    rep = validate_scene(_with(assets, defects=defects))
    assert not rep.passed
    assert any(f["check"] == "boundary_coincidence" for f in rep.failures())
