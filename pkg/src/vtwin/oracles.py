"""Independent reference implementations for validating the fast paths.

Everything here is written directly from first principles (free-space loss,
exact image-method reflections) without reusing the production tracer's
internals, so agreement between the two is meaningful evidence rather than
a tautology.  These routines are deliberately slow and only handle small
scenes; `image_method_paths` refuses anything it cannot enumerate exactly.
"""

from __future__ import annotations

import math

import numpy as np

from .channel import PathComponent
from .errors import UnsupportedScene
from .scene import Scene

_C = 299792458.0
_MAX_WALLS = 16


def friis_gain_db(distance_m: float, carrier_hz: float) -> float:
    """Free-space path gain 20*log10(wavelength / (4 pi d))."""
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    lam = _C / carrier_hz
    return 20.0 * math.log10(lam / (4.0 * math.pi * distance_m))


def _walls(scene: Scene) -> list[tuple[np.ndarray, np.ndarray, float, float]]:
    """Building walls as (a, b, height, reflectivity) with a, b 2D corners."""
    walls = []
    for bld in scene.buildings:
        pts = bld.footprint
        for i in range(len(pts)):
            a = np.asarray(pts[i], dtype=float)
            b = np.asarray(pts[(i + 1) % len(pts)], dtype=float)
            walls.append((a, b, bld.height, bld.reflectivity))
    return walls


def _mirror(point: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    n2 = float(d @ d)
    t = float((point - a) @ d) / n2
    foot = a + t * d
    return 2.0 * foot - point


def _seg_intersection(p: np.ndarray, q: np.ndarray, a: np.ndarray,
                      b: np.ndarray):
    """Parameters (t, u) with p + t(q-p) = a + u(b-a), or None if parallel."""
    r = q - p
    s = b - a
    denom = r[0] * s[1] - r[1] * s[0]
    if abs(denom) < 1e-14:
        return None
    qp = a - p
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    u = (qp[0] * r[1] - qp[1] * r[0]) / denom
    return t, u


def _leg_blocked(p: np.ndarray, q: np.ndarray, walls, skip: tuple[int, ...],
                 z_p: float, z_q: float) -> bool:
    """True if the 3D segment p->q crosses any wall not in `skip`.

    Altitude along the leg interpolates linearly with the horizontal
    parameter; a wall blocks when the crossing altitude is below its top.
    """
    for w, (a, b, height, _refl) in enumerate(walls):
        if w in skip:
            continue
        hit = _seg_intersection(p, q, a, b)
        if hit is None:
            continue
        t, u = hit
        if 1e-9 < t < 1.0 - 1e-9 and -1e-9 <= u <= 1.0 + 1e-9:
            z_hit = z_p + t * (z_q - z_p)
            if z_hit <= height + 1e-9:
                return True
    return False


def los_path(scene: Scene, tx: np.ndarray, rx: np.ndarray,
             carrier_hz: float) -> PathComponent | None:
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    walls = _walls(scene)
    if _leg_blocked(tx[:2], rx[:2], walls, (), tx[2], rx[2]):
        return None
    d = float(np.linalg.norm(rx - tx))
    lam = _C / carrier_hz
    delay = d / _C
    diff = rx - tx
    return PathComponent(
        amplitude=lam / (4.0 * math.pi * d),
        phase=float((-2.0 * math.pi * carrier_hz * delay + math.pi)
                    % (2.0 * math.pi) - math.pi),
        delay=delay,
        azimuth=float(math.atan2(diff[1], diff[0])),
        elevation=float(math.atan2(diff[2], math.hypot(diff[0], diff[1]))),
        interactions=0)


def _try_sequence(seq: tuple[int, ...], walls, tx: np.ndarray,
                  rx: np.ndarray, carrier_hz: float) -> PathComponent | None:
    """Exact reflected path for one ordered wall sequence, if physical."""
    tx2, rx2 = tx[:2], rx[:2]
    images = [tx2]
    for w in seq:
        a, b, _h, _r = walls[w]
        images.append(_mirror(images[-1], a, b))

    points = [rx2]
    target = rx2
    for j in range(len(seq) - 1, -1, -1):
        a, b, _h, _r = walls[seq[j]]
        hit = _seg_intersection(images[j + 1], target, a, b)
        if hit is None:
            return None
        t, u = hit
        if not (-1e-9 <= u <= 1.0 + 1e-9) or not (1e-12 < t < 1.0 - 1e-12):
            return None
        bounce = a + np.clip(u, 0.0, 1.0) * (b - a)
        points.append(bounce)
        target = bounce
    points.append(tx2)
    points.reverse()  # tx, bounce_1..bounce_k, rx

    horiz = 0.0
    for j in range(len(points) - 1):
        horiz += float(np.linalg.norm(points[j + 1] - points[j]))
    if horiz < 1e-9:
        return None

    # reflection must flip the normal component of the direction
    for j, w in enumerate(seq):
        a, b, _h, _r = walls[w]
        d_seg = b - a
        normal = np.array([-d_seg[1], d_seg[0]])
        d_in = points[j + 1] - points[j]
        d_out = points[j + 2] - points[j + 1]
        if float(np.linalg.norm(d_in)) < 1e-9 or float(np.linalg.norm(d_out)) < 1e-9:
            return None
        if (d_in @ normal) * (d_out @ normal) >= 0.0:
            return None

    # altitude along the unfolded path, bounce heights must stay on the wall
    cum = 0.0
    refl = 1.0
    for j, w in enumerate(seq):
        cum += float(np.linalg.norm(points[j + 1] - points[j]))
        z_hit = tx[2] + (rx[2] - tx[2]) * cum / horiz
        a, b, height, r = walls[w]
        if z_hit < -1e-6 or z_hit > height + 1e-6:
            return None
        refl *= r

    # every leg must be clear of the other walls
    for j in range(len(points) - 1):
        skip = []
        if j > 0:
            skip.append(seq[j - 1])
        if j < len(seq):
            skip.append(seq[j])
        z_p = tx[2] + (rx[2] - tx[2]) * _polyline_len(points[: j + 1]) / horiz
        z_q = tx[2] + (rx[2] - tx[2]) * _polyline_len(points[: j + 2]) / horiz
        if _leg_blocked(points[j], points[j + 1], walls, tuple(skip), z_p, z_q):
            return None

    d3 = math.hypot(horiz, rx[2] - tx[2])
    lam = _C / carrier_hz
    delay = d3 / _C
    first = points[1] - points[0]
    phase = -2.0 * math.pi * carrier_hz * delay + math.pi * len(seq)
    return PathComponent(
        amplitude=lam / (4.0 * math.pi * d3) * refl,
        phase=float((phase + math.pi) % (2.0 * math.pi) - math.pi),
        delay=delay,
        azimuth=float(math.atan2(first[1], first[0])),
        elevation=float(math.atan2(rx[2] - tx[2], horiz)),
        interactions=len(seq))


def _polyline_len(points) -> float:
    total = 0.0
    for j in range(len(points) - 1):
        total += float(np.linalg.norm(np.asarray(points[j + 1])
                                      - np.asarray(points[j])))
    return total


def image_method_paths(scene: Scene, tx, rx, max_depth: int = 2,
                       carrier_hz: float = 5.875e9) -> list[PathComponent]:
    """All exact specular paths up to `max_depth` wall bounces, plus LOS.

    Only meant for small open scenes: raises UnsupportedScene when vehicles
    are present or the wall count exceeds what brute-force enumeration can
    cover exactly.
    """
    if scene.vehicles:
        raise UnsupportedScene("reference enumeration does not model vehicles")
    walls = _walls(scene)
    if len(walls) > _MAX_WALLS:
        raise UnsupportedScene(f"too many walls: {len(walls)} > {_MAX_WALLS}")
    if max_depth < 0 or max_depth > 3:
        raise UnsupportedScene("max_depth must be within [0, 3]")

    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    paths = []
    los = los_path(scene, tx, rx, carrier_hz)
    if los is not None:
        paths.append(los)

    def extend(seq: tuple[int, ...]):
        if seq:
            p = _try_sequence(seq, walls, tx, rx, carrier_hz)
            if p is not None:
                paths.append(p)
        if len(seq) == max_depth:
            return
        for w in range(len(walls)):
            if seq and seq[-1] == w:
                continue
            extend(seq + (w,))

    extend(())
    paths.sort(key=lambda p: p.delay)
    return paths
