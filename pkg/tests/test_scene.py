import copy

import numpy as np
import pytest

from vtwin.errors import MalformedMap, UnknownVehicleKind
from vtwin.scene import (
    KIND_DIMS,
    Pose,
    antenna_position,
    box_footprint,
    build_scene,
    surface_set,
    update_poses,
    vehicle_geometry,
)

SQUARE_20 = [[0.0, 0.0], [20.0, 0.0], [20.0, 20.0], [0.0, 20.0]]


def test_empty_map_is_a_valid_ground_plane():
    scene = build_scene({})
    assert scene.buildings == ()
    assert scene.rsus == ()
    assert scene.vehicles == {}


def test_single_building_footprint_area():
    scene = build_scene({"buildings": [{"polygon": SQUARE_20, "height": 15.0}]})
    assert len(scene.buildings) == 1
    b = scene.buildings[0]
    x, y = b.footprint[:, 0], b.footprint[:, 1]
    area = 0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
    assert area == pytest.approx(400.0)
    assert b.height == 15.0


def test_self_intersecting_polygon_rejected():
    bowtie = [[0, 0], [10, 10], [10, 0], [0, 10]]
    with pytest.raises(MalformedMap):
        build_scene({"buildings": [{"polygon": bowtie, "height": 5.0}]})


def test_unknown_map_key_rejected():
    with pytest.raises(MalformedMap):
        build_scene({"bulidings": []})


def test_rsu_needs_positive_mount_height():
    with pytest.raises(MalformedMap):
        build_scene({"rsus": [{"x": 0, "y": 0, "z": 0}]})


def test_vehicle_geometry_box_counts():
    assert len(vehicle_geometry("car", 0).primitives) == 1
    for kind in KIND_DIMS:
        counts = [len(vehicle_geometry(kind, f).primitives) for f in range(4)]
        assert counts == sorted(counts)
        assert counts[0] == 1


def test_vehicle_geometry_is_pure():
    a = vehicle_geometry("car", 2)
    b = vehicle_geometry("car", 2)
    assert len(a.primitives) == len(b.primitives)
    for pa, pb in zip(a.primitives, b.primitives):
        np.testing.assert_array_equal(pa.center, pb.center)
        np.testing.assert_array_equal(pa.half, pb.half)


def test_unknown_kind_raises():
    with pytest.raises(UnknownVehicleKind):
        vehicle_geometry("hovercraft", 0)
    with pytest.raises(ValueError):
        vehicle_geometry("car", 7)


def test_update_poses_identity_keeps_geometry():
    scene = build_scene({})
    pose = Pose(position=np.array([5.0, 5.0]), heading=0.3, speed=3.0)
    s1 = update_poses(scene, {"v0": pose}, fidelity=1, kinds={"v0": "car"})
    s2 = update_poses(s1, {"v0": pose})
    f1 = surface_set(s1)
    f2 = surface_set(s2)
    np.testing.assert_array_equal(f1.ax, f2.ax)
    np.testing.assert_array_equal(f1.ay, f2.ay)


def test_update_poses_empty_map_is_noop():
    scene = build_scene({"buildings": [{"polygon": SQUARE_20, "height": 8.0}]})
    out = update_poses(scene, {})
    assert out.buildings == scene.buildings
    assert out.vehicles == scene.vehicles


def test_update_poses_never_mutates_statics():
    scene = build_scene({"buildings": [{"polygon": SQUARE_20, "height": 8.0}],
                         "rsus": [{"x": 0, "y": 0, "z": 10}]})
    before = copy.deepcopy(scene.buildings[0].footprint)
    rsu_before = copy.deepcopy(scene.rsus[0].position)
    update_poses(scene, {"v0": Pose(np.array([3.0, 3.0]), 0.0, 1.0)},
                 fidelity=0, kinds={"v0": "bus"})
    np.testing.assert_array_equal(scene.buildings[0].footprint, before)
    np.testing.assert_array_equal(scene.rsus[0].position, rsu_before)


def test_update_poses_heading_pi_reflects_corners():
    scene = build_scene({})
    center = np.array([10.0, -4.0])
    s0 = update_poses(scene, {"v": Pose(center, 0.0, 0.0)}, fidelity=0,
                      kinds={"v": "car"})
    s1 = update_poses(s0, {"v": Pose(center, np.pi, 0.0)})
    c0 = box_footprint(s0.vehicles["v"].body.primitives[0], s0.vehicles["v"].pose)
    c1 = box_footprint(s1.vehicles["v"].body.primitives[0], s1.vehicles["v"].pose)
    reflected = 2 * center - c0
    # same corner set after reflection through the vehicle center
    got = sorted(map(tuple, np.round(c1, 9)))
    want = sorted(map(tuple, np.round(reflected, 9)))
    assert got == want


def test_update_poses_new_vehicle_requires_kind():
    scene = build_scene({})
    with pytest.raises(UnknownVehicleKind):
        update_poses(scene, {"ghost": Pose(np.zeros(2), 0.0, 0.0)}, fidelity=0)


def test_antenna_sits_above_the_roof():
    scene = update_poses(build_scene({}), {"b": Pose(np.zeros(2), 0.0, 0.0)},
                         fidelity=0, kinds={"b": "bus"})
    pos = antenna_position(scene.vehicles["b"])
    assert pos[2] == pytest.approx(KIND_DIMS["bus"][2] + 0.2)


def test_surface_set_owner_indices_follow_sorted_ids():
    scene = build_scene({"buildings": [{"polygon": SQUARE_20, "height": 8.0}]})
    poses = {"z9": Pose(np.array([40.0, 0.0]), 0.0, 0.0),
             "a1": Pose(np.array([60.0, 0.0]), 0.0, 0.0)}
    scene = update_poses(scene, poses, fidelity=0,
                         kinds={"z9": "car", "a1": "car"})
    surf = surface_set(scene)
    owners = set(surf.owner.tolist())
    assert owners == {-1, 0, 1}
    assert scene.vehicle_ids() == ["a1", "z9"]
