"""Planar geometry helpers shared by the scene builder and the ray tracer.

The propagation model is 2.5D: every reflecting or blocking surface is a
vertical rectangle described by its footprint segment [a, b] and a height
interval [z0, z1].  Rays are traced in the horizontal plane and the vertical
coordinate is unfolded analytically along the accumulated path length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-9


def rot2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def wrap_angle(theta: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return float((theta + np.pi) % (2.0 * np.pi) - np.pi)


def polygon_area(pts: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise vertex order."""
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _segs_properly_intersect(p1, p2, p3, p4) -> bool:
    d1 = _cross2(p4 - p3, p1 - p3)
    d2 = _cross2(p4 - p3, p2 - p3)
    d3 = _cross2(p2 - p1, p3 - p1)
    d4 = _cross2(p2 - p1, p4 - p1)
    return ((d1 > EPS) != (d2 > EPS)) and ((d3 > EPS) != (d4 > EPS)) and \
        min(abs(d1), abs(d2)) > EPS and min(abs(d3), abs(d4)) > EPS


def polygon_is_simple(pts: np.ndarray) -> bool:
    """True when no two non-adjacent edges cross (O(n^2) test)."""
    n = len(pts)
    for i in range(n):
        a1, a2 = pts[i], pts[(i + 1) % n]
        if np.hypot(*(a2 - a1)) < EPS:
            return False
        for j in range(i + 1, n):
            if abs(i - j) in (0, 1) or (i == 0 and j == n - 1):
                continue
            b1, b2 = pts[j], pts[(j + 1) % n]
            if _segs_properly_intersect(a1, a2, b1, b2):
                return False
    return True


def reflect_point(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Mirror point p across the infinite line through a and b."""
    d = b - a
    d = d / np.hypot(*d)
    w = p - a
    proj = a + d * float(np.dot(w, d))
    return 2.0 * proj - p


def line_cross_param(p: np.ndarray, q: np.ndarray, a: np.ndarray,
                     b: np.ndarray) -> tuple[float, float] | None:
    """Intersection of segments pq and ab as parameters (t along pq, u along ab).

    Returns None for parallel segments.  Callers apply their own interval
    checks; this routine does the raw solve only.
    """
    r = q - p
    s = b - a
    denom = float(r[0] * s[1] - r[1] * s[0])
    if abs(denom) < 1e-15:
        return None
    w = a - p
    t = float(w[0] * s[1] - w[1] * s[0]) / denom
    u = float(w[0] * r[1] - w[1] * r[0]) / denom
    return t, u


@dataclass
class SurfaceSet:
    """Flat arrays describing every vertical surface in a scene snapshot.

    owner[i] is -1 for static geometry and otherwise the index of the vehicle
    (in the scene's sorted id order) whose body contributed segment i.  The
    rx-side tracer uses it to let a user's own body pass its antenna.
    """

    ax: np.ndarray
    ay: np.ndarray
    bx: np.ndarray
    by: np.ndarray
    z0: np.ndarray
    z1: np.ndarray
    refl: np.ndarray
    owner: np.ndarray

    def __len__(self) -> int:
        return len(self.ax)

    @staticmethod
    def from_rows(rows: list[tuple]) -> "SurfaceSet":
        if not rows:
            z = np.zeros(0)
            return SurfaceSet(z, z, z, z, z, z, z, np.zeros(0, dtype=np.int64))
        arr = np.array([r[:7] for r in rows], dtype=float)
        owner = np.array([r[7] for r in rows], dtype=np.int64)
        return SurfaceSet(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy(),
                          arr[:, 3].copy(), arr[:, 4].copy(), arr[:, 5].copy(),
                          arr[:, 6].copy(), owner)


def crossing_blocked(p: np.ndarray, q: np.ndarray, zp: float, zq: float,
                     surf: SurfaceSet, skip: tuple[int, ...] = (),
                     skip_owner: int = -2, full_height: bool = False) -> bool:
    """Occlusion test for the 3D segment (p, zp) -> (q, zq).

    With full_height the vertical extent of every surface is ignored, which is
    the convention the bounce tracer uses (see channel module notes).  skip
    lists surface indices excluded from the test (a path's own reflection
    surfaces); skip_owner excludes every surface owned by one vehicle.
    """
    r = q - p
    seg_len = float(np.hypot(*r))
    if seg_len < EPS:
        return False
    n = len(surf)
    for i in range(n):
        if i in skip or surf.owner[i] == skip_owner:
            continue
        a = np.array([surf.ax[i], surf.ay[i]])
        b = np.array([surf.bx[i], surf.by[i]])
        tu = line_cross_param(p, q, a, b)
        if tu is None:
            continue
        t, u = tu
        if t <= EPS or t >= 1.0 - EPS or u < EPS or u > 1.0 - EPS:
            continue
        if full_height:
            return True
        zc = zp + (zq - zp) * t
        if surf.z0[i] - EPS <= zc <= surf.z1[i] + EPS:
            return True
    return False
