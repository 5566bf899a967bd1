import numpy as np
import pytest

from scenemotion.errors import EmptyObject, UnknownObject
from scenemotion.goals import Goal
from scenemotion.kinematics import RootTransform
from scenemotion.voxel import (
    GRID_FLAT,
    GRID_RES,
    Box,
    Scene,
    SceneObject,
    VoxelGrid,
    empty_grid_flat,
    encode_relative,
    flatten_grid,
    voxelize_object,
    yaw_rotation,
)


def test_box_contains_rotated():
    b = Box(np.array([1.0, 0.0, 0.0]), np.array([1.0, 0.5, 0.25]), yaw=np.pi / 2)
    # yaw by 90 deg swaps the x and z half extents
    assert b.contains(np.array([1.2, 0.0, 0.0]))
    assert not b.contains(np.array([1.3, 0.0, 0.0]))
    assert b.contains(np.array([1.0, 0.0, 0.9]))
    assert not b.contains(np.array([1.0, 0.6, 0.0]))
    with pytest.raises(ValueError):
        Box(np.zeros(3), np.array([1.0, -1.0, 1.0]))


def test_box_corners_and_surface_point():
    b = Box(np.zeros(3), np.array([1.0, 2.0, 3.0]))
    c = b.corners()
    assert c.shape == (8, 3)
    assert np.allclose(np.abs(c), [1.0, 2.0, 3.0])
    # outside point clamps to the surface
    p = b.nearest_surface_point(np.array([5.0, 0.0, 0.0]))
    assert np.allclose(p, [1.0, 0.0, 0.0])
    # inside point exits through the closest face
    p = b.nearest_surface_point(np.array([0.9, 0.0, 0.0]))
    assert np.allclose(p, [1.0, 0.0, 0.0])


def test_box_surface_point_is_closest_dense_oracle():
    rng = np.random.default_rng(21)
    b = Box(np.array([0.5, 0.2, -0.3]), np.array([0.8, 0.4, 0.6]), yaw=0.7)
    # dense sampling of the surface as the oracle
    grid = np.linspace(-1, 1, 41)
    faces = []
    for ax in range(3):
        for s in (-1, 1):
            u, v = np.meshgrid(grid, grid, indexing="ij")
            pts = np.zeros((41 * 41, 3))
            others = [a for a in range(3) if a != ax]
            pts[:, others[0]] = u.ravel() * b.half_extents[others[0]]
            pts[:, others[1]] = v.ravel() * b.half_extents[others[1]]
            pts[:, ax] = s * b.half_extents[ax]
            faces.append(pts)
    surf = np.concatenate(faces) @ yaw_rotation(b.yaw).T + b.center
    for _ in range(20):
        p = rng.normal(scale=1.5, size=3) + b.center
        got = np.linalg.norm(b.nearest_surface_point(p) - p)
        oracle = np.linalg.norm(surf - p, axis=1).min()
        assert got <= oracle + 1e-6


def _chair_like():
    return SceneObject(
        id="c", category="chair",
        boxes=[Box(np.array([0.0, 0.25, 0.0]), np.array([0.25, 0.25, 0.25])),
               Box(np.array([0.0, 0.75, -0.2]), np.array([0.25, 0.25, 0.05]))],
        position=np.array([2.0, 0.0, 1.0]), yaw=0.5,
        goals=[Goal(np.array([0.0, 0.5, 0.0]), np.array([0.0, 0.0, 1.0]), "sit")],
    )


def test_scene_object_world_transforms_roundtrip():
    obj = _chair_like()
    rng = np.random.default_rng(22)
    pts = rng.normal(size=(10, 3))
    assert np.allclose(obj.to_object(obj.to_world(pts)), pts, atol=1e-12)
    g = obj.world_goals()[0]
    assert g.action == "sit"
    # world goal sits at the object position plus rotated offset
    assert np.allclose(g.position, obj.to_world(np.array([0.0, 0.5, 0.0])), atol=1e-12)
    with pytest.raises(EmptyObject):
        SceneObject(id="x", category="none", boxes=[])


def test_scene_lookup_and_serialization(tmp_path):
    obj = _chair_like()
    scene = Scene([obj], bounds_min=np.array([-5.0, -5.0]), bounds_max=np.array([5.0, 5.0]))
    assert scene.object_by_id("c") is obj
    with pytest.raises(UnknownObject):
        scene.object_by_id("nope")
    with pytest.raises(ValueError):
        Scene([obj, _chair_like()])
    path = str(tmp_path / "scene.json")
    scene.save(path)
    back = Scene.load(path)
    assert back.objects[0].id == "c"
    assert np.allclose(back.objects[0].position, obj.position)
    assert np.allclose(back.bounds_min, scene.bounds_min)
    assert len(back.objects[0].goals) == 1


def test_voxelize_occupancy_against_dense_sampling():
    obj = _chair_like()
    grid = voxelize_object(obj, subsamples=6)
    assert grid.occupancy.shape == (GRID_RES,) * 3
    assert np.all((grid.occupancy >= 0) & (grid.occupancy <= 1))
    # mass is conserved roughly: occupied volume == sum of box volumes
    cell = (grid.bounds_hi - grid.bounds_lo) / GRID_RES
    vol_est = grid.occupancy.sum() * np.prod(cell)
    vol_true = sum(np.prod(2 * b.half_extents) for b in obj.boxes)
    assert abs(vol_est - vol_true) / vol_true < 0.05
    # cells with centers deep inside a box are fully occupied
    centers_abs = grid.centers + grid.object_center
    for b in obj.boxes:
        deep = b.contains(centers_abs.reshape(-1, 3), eps=-0.08)
        if deep.any():
            assert np.all(grid.occupancy.reshape(-1)[deep] > 0.5)


def test_voxelize_is_object_frame_invariant_to_pose():
    a = _chair_like()
    b = _chair_like()
    b.position = np.array([-7.0, 0.0, 3.0])
    b.yaw = 2.0
    ga, gb = voxelize_object(a), voxelize_object(b)
    assert np.allclose(ga.occupancy, gb.occupancy)
    assert np.allclose(ga.centers, gb.centers)


def test_flatten_grid_layout_and_empty():
    obj = _chair_like()
    grid = voxelize_object(obj)
    flat = flatten_grid(grid)
    assert flat.shape == (GRID_FLAT,)
    # x index varies fastest: entry layout is (cx, cy, cz, occ) per cell
    v0 = flat[:4]
    assert np.allclose(v0[:3], grid.centers[0, 0, 0])
    assert np.isclose(v0[3], grid.occupancy[0, 0, 0])
    v1 = flat[4:8]
    assert np.allclose(v1[:3], grid.centers[1, 0, 0])
    assert np.array_equal(empty_grid_flat(), np.zeros(GRID_FLAT))


def test_encode_relative_moves_centers_not_occupancy():
    obj = _chair_like()
    grid = voxelize_object(obj)
    root = RootTransform(np.array([0.0, -2.0]), np.array([0.0, 1.0]))
    rel = encode_relative(grid, root, obj)
    assert np.allclose(rel.occupancy, grid.occupancy)
    # world center of the object, expressed in the root frame, matches the
    # grid's mean center
    world_pts = obj.to_world(grid.centers.reshape(-1, 3) + grid.object_center)
    from scenemotion.kinematics import to_root_relative
    expect = to_root_relative(world_pts, root).mean(axis=0)
    assert np.allclose(rel.centers.reshape(-1, 3).mean(axis=0), expect, atol=1e-9)
    # identity root without an object leaves centers untouched
    same = encode_relative(grid, RootTransform(np.zeros(2), np.array([0.0, 1.0])))
    assert np.allclose(same.centers, grid.centers)
