import numpy as np
import pytest

from vtwin.errors import UnsupportedScene
from vtwin.oracles import friis_gain_db, image_method_paths, los_path
from vtwin.scene import Pose, build_scene, update_poses

C = 299792458.0


def test_friis_reference_values():
    assert friis_gain_db(100.0, 5.875e9) == pytest.approx(-87.83, abs=0.01)
    assert friis_gain_db(100.0, 5.875e9) == pytest.approx(-87.82794064075885)


def test_friis_doubling_laws():
    base = friis_gain_db(100.0, 5.875e9)
    assert friis_gain_db(200.0, 5.875e9) - base == pytest.approx(-6.0206, abs=1e-4)
    assert friis_gain_db(100.0, 2 * 5.875e9) - base == pytest.approx(-6.0206, abs=1e-4)


def test_friis_rejects_nonpositive_distance():
    with pytest.raises(ValueError):
        friis_gain_db(0.0, 5.875e9)


def test_open_scene_has_only_the_direct_path():
    scene = build_scene({})
    paths = image_method_paths(scene, (0.0, 0.0, 10.0), (100.0, 0.0, 1.7))
    assert len(paths) == 1
    p = paths[0]
    assert p.interactions == 0
    d = np.hypot(100.0, 10.0 - 1.7)
    assert p.delay == pytest.approx(d / C, rel=1e-12)
    assert 20 * np.log10(p.amplitude) == pytest.approx(friis_gain_db(d, 5.875e9))


def test_single_wall_mirror_geometry():
    scene = build_scene(
        {"buildings": [{"polygon": [[-20, 5], [30, 5], [30, 6], [-20, 6]],
                        "height": 10.0}]}
    )
    paths = image_method_paths(scene, (0.0, 0.0, 5.0), (10.0, 0.0, 5.0),
                               max_depth=1)
    assert [p.interactions for p in paths] == [0, 1]
    assert paths[1].delay * C == pytest.approx(14.142135623730951, abs=1e-12)


def test_wall_behind_transmitter_adds_no_path():
    scene = build_scene(
        {"buildings": [{"polygon": [[-30, -20], [-20, -20], [-20, 20],
                                    [-30, 20]], "height": 10.0}]}
    )
    # tx at the origin looks away from the slab; every mirror lands behind it
    paths = image_method_paths(scene, (0.0, 0.0, 5.0), (50.0, 0.0, 5.0),
                               max_depth=1)
    interaction_counts = [p.interactions for p in paths]
    assert interaction_counts == [0, 1]
    # the only bounce is off the slab's near face behind the transmitter:
    # 20 m back plus 70 m forward
    assert paths[1].delay * C == pytest.approx(90.0, abs=1e-9)


def test_blocked_direct_path_is_omitted():
    scene = build_scene(
        {"buildings": [{"polygon": [[-50, 10], [50, 10], [50, 14], [-50, 14]],
                        "height": 40.0}]}
    )
    assert los_path(scene, np.array([0.0, 0.0, 5.0]),
                    np.array([0.0, 24.0, 5.0]), 5.875e9) is None


def test_unsupported_scenes_are_refused():
    scene = build_scene({})
    with_vehicle = update_poses(scene, {"car0": Pose((5.0, 5.0), 0.0, 0.0)},
                                kinds={"car0": "car"})
    with pytest.raises(UnsupportedScene):
        image_method_paths(with_vehicle, (0, 0, 5), (10, 0, 5))

    buildings = [{"polygon": [[i * 30, 0], [i * 30 + 10, 0],
                              [i * 30 + 10, 10], [i * 30, 10]], "height": 8.0}
                 for i in range(5)]
    crowded = build_scene({"buildings": buildings})
    with pytest.raises(UnsupportedScene):
        image_method_paths(crowded, (0, -20, 5), (10, -20, 5))

    with pytest.raises(UnsupportedScene):
        image_method_paths(scene, (0, 0, 5), (10, 0, 5), max_depth=4)


def test_paths_sorted_by_delay_and_phase_wrapped():
    scene = build_scene(
        {"buildings": [
            {"polygon": [[-40, 8], [60, 8], [60, 9], [-40, 9]], "height": 12.0},
            {"polygon": [[-40, -9], [60, -9], [60, -8], [-40, -8]], "height": 12.0},
        ]}
    )
    paths = image_method_paths(scene, (0.0, 0.0, 5.0), (30.0, 2.0, 5.0),
                               max_depth=2)
    delays = [p.delay for p in paths]
    assert delays == sorted(delays)
    assert all(-np.pi <= p.phase <= np.pi for p in paths)
    assert all(p.amplitude > 0 for p in paths)
