import numpy as np
import pytest

from vtwin.geometry import (
    SurfaceSet,
    crossing_blocked,
    line_cross_param,
    polygon_area,
    polygon_is_simple,
    reflect_point,
    wrap_angle,
)


def test_polygon_area_unit_square():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    assert polygon_area(square) == pytest.approx(1.0)
    assert polygon_area(square[::-1]) == pytest.approx(-1.0)


def test_polygon_simplicity():
    bowtie = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    assert not polygon_is_simple(bowtie)
    square = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]])
    assert polygon_is_simple(square)


def test_wrap_angle_range():
    for k in range(-8, 9):
        val = wrap_angle(0.3 + k * 2 * np.pi)
        assert -np.pi <= val < np.pi
        assert val == pytest.approx(0.3)


def test_reflect_point_across_horizontal_line():
    out = reflect_point(np.array([2.0, 3.0]), np.array([0.0, 1.0]),
                        np.array([5.0, 1.0]))
    np.testing.assert_allclose(out, [2.0, -1.0])


def test_line_cross_param_basic():
    hit = line_cross_param(np.array([0.0, 0.0]), np.array([2.0, 0.0]),
                           np.array([1.0, -1.0]), np.array([1.0, 1.0]))
    assert hit is not None
    t, u = hit
    assert t == pytest.approx(0.5)
    assert u == pytest.approx(0.5)
    assert line_cross_param(np.array([0.0, 0.0]), np.array([1.0, 0.0]),
                            np.array([0.0, 1.0]), np.array([1.0, 1.0])) is None


def test_crossing_blocked_altitude_and_owner_rules():
    surf = SurfaceSet.from_rows([(0.0, -1.0, 0.0, 1.0, 0.0, 3.0, 0.9, 4)])
    p = np.array([-1.0, 0.0])
    q = np.array([1.0, 0.0])
    assert crossing_blocked(p, q, 1.0, 1.0, surf)
    # segment passing above the wall top is clear unless full_height is set
    assert not crossing_blocked(p, q, 5.0, 5.0, surf)
    assert crossing_blocked(p, q, 5.0, 5.0, surf, full_height=True)
    assert not crossing_blocked(p, q, 1.0, 1.0, surf, skip_owner=4)
    assert not crossing_blocked(p, q, 1.0, 1.0, surf, skip=(0,))
