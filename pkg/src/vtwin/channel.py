"""Simplified ray-traced channel generation with tunable fidelity.

The tracer is 2.5D.  Rays are launched as a jittered, azimuth-stratified fan
in the horizontal plane and bounce specularly off vertical surfaces (building
walls and vehicle body boxes).  The vertical coordinate unfolds analytically:
along a path of horizontal length Lh the altitude interpolates linearly from
the transmitter height to the receiver height, which is exact for reflections
off vertical planes.  Conventions that follow from this model:

* The direct path is tested with altitude-aware occlusion (a low vehicle does
  not shadow a high mast across the street).
* Bounce paths use conservative full-height occlusion during marching and
  validation, because a marching ray cannot know its final altitude profile.
  The reference image-method oracle applies the same rule, so the two agree
  path-for-path on scenes they both support.
* Reflection points must fall inside the vertical extent of their surface.
* The ground plane never reflects; an empty scene yields exactly one path.

A capture sphere of radius (path length) * 2 * pi / n_rays decides whether a
ray reaches a receiver.  The factor 2 makes the angular window per receiver
one full ray spacing on either side, which the jittered stratified fan can
never straddle without a hit, so every specular sequence that connects is
seeded regardless of jitter.  Captured bounce sequences are then re-solved
exactly by mirror construction, so ray count controls which diffuse detail is
discovered while the geometry of every reported path is exact.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DimensionMismatch
from .geometry import SurfaceSet
from .scene import Scene, Rsu, surface_set

C_LIGHT = 299792458.0
CARRIER_DEFAULT = 5.875e9
GAIN_FLOOR_DB = -200.0

N_RAYS_MIN, N_RAYS_MAX = 100, 10 ** 6
DEPTH_MIN, DEPTH_MAX = 1, 10

#: amplitude factor applied to a diffuse bounce on top of surface reflectivity
DIFFUSE_FACTOR = 0.3
#: minimum knife-edge loss applied to any diffracted path
DIFFRACTION_MIN_LOSS_DB = 6.0


@dataclass(frozen=True)
class FidelityConfig:
    """Simulator fidelity knobs: ray count, bounce depth, path cap, features."""

    n_rays: int
    max_depth: int
    n_paths: int = 0
    diffuse: bool = False
    diffraction: bool = False
    vehicle_fidelity: int = 0

    def __post_init__(self):
        if not (N_RAYS_MIN <= self.n_rays <= N_RAYS_MAX):
            raise ValueError(f"n_rays must be in [{N_RAYS_MIN}, {N_RAYS_MAX}]")
        if not (DEPTH_MIN <= self.max_depth <= DEPTH_MAX):
            raise ValueError(f"max_depth must be in [{DEPTH_MIN}, {DEPTH_MAX}]")
        if self.n_paths == 0:
            object.__setattr__(self, "n_paths", 10 * self.n_rays)
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not (0 <= self.vehicle_fidelity <= 3):
            raise ValueError("vehicle_fidelity must be in 0..3")

    def dominates(self, other: "FidelityConfig") -> bool:
        """Componentwise >= on every knob (feature flags count as 0/1)."""
        return (self.n_rays >= other.n_rays and self.max_depth >= other.max_depth
                and self.n_paths >= other.n_paths
                and self.diffuse >= other.diffuse
                and self.diffraction >= other.diffraction
                and self.vehicle_fidelity >= other.vehicle_fidelity)

    def label(self) -> str:
        return (f"r{self.n_rays}_d{self.max_depth}_p{self.n_paths}"
                f"_dr{int(self.diffuse)}_df{int(self.diffraction)}"
                f"_fv{self.vehicle_fidelity}")


@dataclass(frozen=True)
class PathComponent:
    amplitude: float  # linear field amplitude, >= 0
    phase: float  # radians, includes carrier phase
    delay: float  # seconds
    azimuth: float  # departure azimuth, global frame
    elevation: float  # departure elevation, negative points down
    interactions: int  # number of surface interactions


@dataclass(frozen=True)
class UlaSpec:
    """Horizontal uniform linear array at the transmitter."""

    n_elements: int
    spacing_wl: float = 0.5
    boresight: float = 0.0  # azimuth of broadside, rad
    downtilt: float = 0.0  # rad, negative points below horizon


def link_seed(master_seed: int, tx_id, rx_id) -> int:
    """Stable per-link substream seed derived from ids, platform independent."""
    text = f"{master_seed}|{tx_id}|{rx_id}".encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "little")


def _stable_phase(*parts) -> float:
    text = "|".join(str(p) for p in parts).encode()
    word = int.from_bytes(hashlib.sha256(text).digest()[:8], "little")
    return (word / 2.0 ** 64) * 2.0 * np.pi - np.pi


# --------------------------------------------------------------------------
# marching kernel


@njit(cache=True, nogil=True)
def _march(sax, say, sbx, sby, sowner,
           txx, txy, rxx, rxy, rx_owner,
           dir_x, dir_y, max_depth, cap_coef, max_range, do_diffuse,
           cap_rx, cap_depth, cap_seq,
           dif_len, dif_px, dif_py, dif_az, dif_seq):
    n_seg = sax.shape[0]
    n_rx = rxx.shape[0]
    n_cap = 0
    cap_max = cap_rx.shape[0]
    seq = np.empty(max_depth, np.int32)

    for ray in range(dir_x.shape[0]):
        x = txx
        y = txy
        dx = dir_x[ray]
        dy = dir_y[ray]
        az0 = np.arctan2(dy, dx)
        cum = 0.0
        for leg in range(max_depth + 1):
            best_t = max_range
            best_s = -1
            for s in range(n_seg):
                ex = sbx[s] - sax[s]
                ey = sby[s] - say[s]
                denom = dx * ey - dy * ex
                if denom < 1e-15 and denom > -1e-15:
                    continue
                wx = sax[s] - x
                wy = say[s] - y
                t = (wx * ey - wy * ex) / denom
                if t <= 1e-12 or t >= best_t:
                    continue
                u = (wx * dy - wy * dx) / denom
                if u < -1e-12 or u > 1.0 + 1e-12:
                    continue
                best_t = t
                best_s = s
            seg_end = best_t

            if leg >= 1:
                for k in range(n_rx):
                    wx = rxx[k] - x
                    wy = rxy[k] - y
                    foot = wx * dx + wy * dy
                    if foot <= 0.0:
                        continue
                    limit = seg_end
                    if foot >= limit and best_s >= 0 and sowner[best_s] >= 0 \
                            and sowner[best_s] == rx_owner[k]:
                        # the blocking surface is the receiver's own body:
                        # extend past it to the first foreign obstacle
                        limit = max_range
                        for s in range(n_seg):
                            if sowner[s] == rx_owner[k]:
                                continue
                            ex = sbx[s] - sax[s]
                            ey = sby[s] - say[s]
                            denom = dx * ey - dy * ex
                            if denom < 1e-15 and denom > -1e-15:
                                continue
                            vx = sax[s] - x
                            vy = say[s] - y
                            t = (vx * ey - vy * ex) / denom
                            if t <= 1e-12 or t >= limit:
                                continue
                            u = (vx * dy - vy * dx) / denom
                            if u < -1e-12 or u > 1.0 + 1e-12:
                                continue
                            limit = t
                    if foot >= limit:
                        continue
                    miss2 = wx * wx + wy * wy - foot * foot
                    r_cap = (cum + foot) * cap_coef
                    if miss2 <= r_cap * r_cap:
                        if n_cap < cap_max:
                            cap_rx[n_cap] = k
                            cap_depth[n_cap] = leg
                            for j in range(leg):
                                cap_seq[n_cap, j] = seq[j]
                        n_cap += 1

            if best_s < 0 or leg == max_depth:
                break

            hx = x + dx * best_t
            hy = y + dy * best_t
            cum_new = cum + best_t

            if do_diffuse:
                for k in range(n_rx):
                    ddx = rxx[k] - hx
                    ddy = rxy[k] - hy
                    total = cum_new + np.sqrt(ddx * ddx + ddy * ddy)
                    if total < dif_len[k, best_s, leg]:
                        dif_len[k, best_s, leg] = total
                        dif_px[k, best_s, leg] = hx
                        dif_py[k, best_s, leg] = hy
                        dif_az[k, best_s, leg] = az0
                        for j in range(leg):
                            dif_seq[k, best_s, leg, j] = seq[j]
                        dif_seq[k, best_s, leg, leg] = best_s

            ex = sbx[best_s] - sax[best_s]
            ey = sby[best_s] - say[best_s]
            norm = np.sqrt(ex * ex + ey * ey)
            nx = ey / norm
            ny = -ex / norm
            dot = dx * nx + dy * ny
            dx = dx - 2.0 * dot * nx
            dy = dy - 2.0 * dot * ny
            seq[leg] = best_s
            x = hx + dx * 1e-9
            y = hy + dy * 1e-9
            cum = cum_new
    return n_cap


# --------------------------------------------------------------------------
# occlusion helpers on flattened surface arrays


def _cross_params(surf: SurfaceSet, p: np.ndarray, q: np.ndarray):
    rx_, ry_ = q[0] - p[0], q[1] - p[1]
    sx = surf.bx - surf.ax
    sy = surf.by - surf.ay
    denom = rx_ * sy - ry_ * sx
    wx = surf.ax - p[0]
    wy = surf.ay - p[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(np.abs(denom) > 1e-15, (wx * sy - wy * sx) / denom, np.inf)
        u = np.where(np.abs(denom) > 1e-15, (wx * ry_ - wy * rx_) / denom, np.inf)
    return t, u


def _blocked_full(surf: SurfaceSet, p, q, skip=(), skip_owner=-2) -> bool:
    """Full-height crossing test used for bounce-path and diffraction legs."""
    if len(surf) == 0:
        return False
    t, u = _cross_params(surf, p, q)
    mask = (t > 1e-9) & (t < 1.0 - 1e-9) & (u > 1e-9) & (u < 1.0 - 1e-9)
    if skip_owner >= 0:
        mask &= surf.owner != skip_owner
    for idx in skip:
        mask[idx] = False
    return bool(mask.any())


def _blocked_los(surf: SurfaceSet, p, zp, q, zq, skip_owner=-2) -> bool:
    """Altitude-aware occlusion of the direct 3D segment."""
    if len(surf) == 0:
        return False
    t, u = _cross_params(surf, p, q)
    mask = (t > 1e-9) & (t < 1.0 - 1e-9) & (u > 1e-9) & (u < 1.0 - 1e-9)
    if skip_owner >= 0:
        mask &= surf.owner != skip_owner
    if not mask.any():
        return False
    zc = zp + (zq - zp) * t[mask]
    return bool(np.any((zc >= surf.z0[mask] - 1e-9) & (zc <= surf.z1[mask] + 1e-9)))


def _refine_sequence(surf: SurfaceSet, tx2, txz, rx2, rxz, seq, owner):
    """Exact mirror-construction solve of one bounce sequence.

    Returns (horizontal_length, bounce_points) or None when the sequence has
    no valid specular solution (off-segment reflection point, wrong-side
    crossing, blocked leg, or a bounce outside its surface's height range).
    """
    k = len(seq)
    lines = [(np.array([surf.ax[s], surf.ay[s]]), np.array([surf.bx[s], surf.by[s]]))
             for s in seq]

    images = []
    img = np.asarray(tx2, dtype=float)
    for a, b in lines:
        d = b - a
        d = d / np.hypot(*d)
        w = img - a
        img = 2.0 * (a + d * float(np.dot(w, d))) - img
        images.append(img)

    points = [None] * k
    target = np.asarray(rx2, dtype=float)
    for j in range(k - 1, -1, -1):
        a, b = lines[j]
        src = images[j]
        r = target - src
        s_vec = b - a
        denom = float(r[0] * s_vec[1] - r[1] * s_vec[0])
        if abs(denom) < 1e-15:
            return None
        w = a - src
        t = float(w[0] * s_vec[1] - w[1] * s_vec[0]) / denom
        u = float(w[0] * r[1] - w[1] * r[0]) / denom
        if u < -1e-9 or u > 1.0 + 1e-9 or t <= 1e-12 or t >= 1.0 - 1e-12:
            return None
        points[j] = a + s_vec * min(max(u, 0.0), 1.0)
        target = points[j]

    chain = [np.asarray(tx2, dtype=float)] + points + [np.asarray(rx2, dtype=float)]
    lengths = []
    for j in range(k + 1):
        leg = chain[j + 1] - chain[j]
        norm = float(np.hypot(*leg))
        if norm < 1e-9:
            return None
        lengths.append(norm)

    # mirror solutions must actually reflect: incoming and outgoing legs lie
    # on opposite sides of each surface
    for j in range(k):
        a, b = lines[j]
        s_vec = b - a
        n_vec = np.array([s_vec[1], -s_vec[0]])
        din = float(np.dot(chain[j + 1] - chain[j], n_vec))
        dout = float(np.dot(chain[j + 2] - chain[j + 1], n_vec))
        if din * dout >= -1e-15:
            return None

    total_h = float(sum(lengths))
    dz = rxz - txz
    cum = 0.0
    for j in range(k):
        cum += lengths[j]
        z_here = txz + dz * (cum / total_h)
        s = seq[j]
        if z_here < surf.z0[s] - 1e-6 or z_here > surf.z1[s] + 1e-6:
            return None

    for j in range(k + 1):
        skip = []
        if j > 0:
            skip.append(seq[j - 1])
        if j < k:
            skip.append(seq[j])
        if _blocked_full(surf, chain[j], chain[j + 1], skip=skip, skip_owner=owner):
            return None
    return total_h, points


# --------------------------------------------------------------------------
# public tracing API


def _building_corners(scene: Scene):
    corners = []
    for b_idx, b in enumerate(scene.buildings):
        n = len(b.footprint)
        for v_idx in range(n):
            adj_prev = (b_idx, (v_idx - 1) % n)
            adj_next = (b_idx, v_idx)
            corners.append((b.footprint[v_idx], b.height, adj_prev, adj_next))
    return corners


def _static_edge_index(scene: Scene) -> dict[tuple[int, int], int]:
    """Map (building, edge) to its row in the surface arrays (static rows first)."""
    idx = {}
    row = 0
    for b_idx, b in enumerate(scene.buildings):
        for e_idx in range(len(b.footprint)):
            idx[(b_idx, e_idx)] = row
            row += 1
    return idx


def _diffraction_paths(scene, surf, tx2, txz, rx2, rxz, owner, lam, carrier_hz):
    """Single-edge knife-edge paths around vertical building corners."""
    out = []
    edge_rows = _static_edge_index(scene)
    for corner, height, adj_a, adj_b in _building_corners(scene):
        skip = (edge_rows[adj_a], edge_rows[adj_b])
        d1h = float(np.hypot(*(corner - tx2)))
        d2h = float(np.hypot(*(rx2 - corner)))
        if d1h < 1e-6 or d2h < 1e-6:
            continue
        z_c = txz + (rxz - txz) * (d1h / (d1h + d2h))
        if z_c > height + 1e-9 or z_c < -1e-9:
            continue
        if _blocked_full(surf, tx2, corner, skip=skip, skip_owner=owner):
            continue
        if _blocked_full(surf, corner, rx2, skip=skip, skip_owner=owner):
            continue
        d1 = float(np.hypot(d1h, z_c - txz))
        d2 = float(np.hypot(d2h, rxz - z_c))
        line = rx2 - tx2
        line_len = float(np.hypot(*line))
        if line_len < 1e-9:
            continue
        unit = line / line_len
        offset = corner - tx2
        clearance = abs(float(unit[0] * offset[1] - unit[1] * offset[0]))
        nu = clearance * np.sqrt(2.0 * (d1 + d2) / (lam * d1 * d2))
        if nu > -0.78:
            loss_db = 6.9 + 20.0 * np.log10(np.sqrt((nu - 0.1) ** 2 + 1.0) + nu - 0.1)
        else:
            loss_db = 0.0
        loss_db = max(loss_db, DIFFRACTION_MIN_LOSS_DB)
        total = d1 + d2
        amp = lam / (4.0 * np.pi * total) * 10.0 ** (-loss_db / 20.0)
        delay = total / C_LIGHT
        leg1 = corner - tx2
        out.append(PathComponent(
            amplitude=float(amp),
            phase=float(-2.0 * np.pi * carrier_hz * delay),
            delay=float(delay),
            azimuth=float(np.arctan2(leg1[1], leg1[0])),
            elevation=float(np.arctan2(rxz - txz, d1h + d2h)),
            interactions=1))
    return out


def trace_paths_batch(scene: Scene, tx, rx_points, cfg: FidelityConfig, seed: int,
                      carrier_hz: float = CARRIER_DEFAULT,
                      exclude_owners=None) -> list[list[PathComponent]]:
    """Trace one transmitter against many receivers sharing a single ray fan.

    rx_points is (n, 3).  exclude_owners optionally gives, per receiver, the
    sorted-id index of the vehicle whose body must not block that receiver
    (its own).  Deterministic for identical inputs regardless of how callers
    schedule work.
    """
    tx = np.asarray(tx.position if isinstance(tx, Rsu) else tx, dtype=float).reshape(3)
    rx_points = np.asarray(rx_points, dtype=float).reshape(-1, 3)
    n_rx = len(rx_points)
    if n_rx == 0:
        return []
    owners = np.full(n_rx, -2, dtype=np.int64)
    if exclude_owners is not None:
        owners = np.asarray(exclude_owners, dtype=np.int64).reshape(n_rx)

    surf = surface_set(scene, cfg.vehicle_fidelity)
    lam = C_LIGHT / carrier_hz
    tx2, txz = tx[:2], tx[2]

    rng = np.random.default_rng(np.random.PCG64(seed))
    jitter = rng.random(cfg.n_rays)
    step = 2.0 * np.pi / cfg.n_rays
    az = -np.pi + (np.arange(cfg.n_rays) + jitter) * step

    span = 100.0
    if len(surf):
        span = max(span, float(np.max(np.hypot(surf.ax - tx2[0], surf.ay - tx2[1]))))
    span = max(span, float(np.max(np.hypot(rx_points[:, 0] - tx2[0],
                                           rx_points[:, 1] - tx2[1]))))
    max_range = 6.0 * span + 100.0

    cap_max = 200_000
    cap_rx = np.zeros(cap_max, dtype=np.int32)
    cap_depth = np.zeros(cap_max, dtype=np.int32)
    cap_seq = np.zeros((cap_max, cfg.max_depth), dtype=np.int32)
    n_seg = len(surf)
    if cfg.diffuse and n_seg:
        dif_shape = (n_rx, n_seg, cfg.max_depth)
        dif_len = np.full(dif_shape, np.inf)
        dif_px = np.zeros(dif_shape)
        dif_py = np.zeros(dif_shape)
        dif_az = np.zeros(dif_shape)
        dif_seq = np.zeros(dif_shape + (cfg.max_depth,), dtype=np.int32)
    else:
        dif_len = np.full((1, 1, 1), np.inf)
        dif_px = np.zeros((1, 1, 1))
        dif_py = np.zeros((1, 1, 1))
        dif_az = np.zeros((1, 1, 1))
        dif_seq = np.zeros((1, 1, 1, 1), dtype=np.int32)

    n_cap = _march(surf.ax, surf.ay, surf.bx, surf.by, surf.owner,
                   tx2[0], tx2[1], rx_points[:, 0].copy(), rx_points[:, 1].copy(),
                   owners, np.cos(az), np.sin(az), cfg.max_depth,
                   2.0 * np.pi / cfg.n_rays, max_range,
                   bool(cfg.diffuse and n_seg),
                   cap_rx, cap_depth, cap_seq,
                   dif_len, dif_px, dif_py, dif_az, dif_seq)
    if n_cap > cap_max:
        raise RuntimeError(f"capture buffer overflow ({n_cap} records); "
                           "scene produces implausibly many captures")

    paths: list[list[PathComponent]] = [[] for _ in range(n_rx)]

    # direct path, altitude aware
    for k in range(n_rx):
        rx2, rxz = rx_points[k, :2], rx_points[k, 2]
        if not _blocked_los(surf, tx2, txz, rx2, rxz, skip_owner=int(owners[k])):
            d_h = float(np.hypot(*(rx2 - tx2)))
            d3 = float(np.hypot(d_h, rxz - txz))
            if d3 > 1e-9:
                delay = d3 / C_LIGHT
                leg = rx2 - tx2
                paths[k].append(PathComponent(
                    amplitude=float(lam / (4.0 * np.pi * d3)),
                    phase=float(-2.0 * np.pi * carrier_hz * delay),
                    delay=float(delay),
                    azimuth=float(np.arctan2(leg[1], leg[0])),
                    elevation=float(np.arctan2(rxz - txz, max(d_h, 1e-12))),
                    interactions=0))

    # specular bounce paths from deduplicated captured sequences
    seen: set[tuple] = set()
    for i in range(min(n_cap, cap_max)):
        k = int(cap_rx[i])
        depth = int(cap_depth[i])
        seq = tuple(int(s) for s in cap_seq[i, :depth])
        key = (k, seq)
        if key in seen:
            continue
        seen.add(key)
        rx2, rxz = rx_points[k, :2], rx_points[k, 2]
        solved = _refine_sequence(surf, tx2, txz, rx2, rxz, seq, int(owners[k]))
        if solved is None:
            continue
        total_h, points = solved
        d3 = float(np.hypot(total_h, rxz - txz))
        delay = d3 / C_LIGHT
        refl = float(np.prod(surf.refl[list(seq)]))
        leg1 = points[0] - tx2
        paths[k].append(PathComponent(
            amplitude=float(lam / (4.0 * np.pi * d3) * refl),
            phase=float(-2.0 * np.pi * carrier_hz * delay + np.pi * depth),
            delay=float(delay),
            azimuth=float(np.arctan2(leg1[1], leg1[0])),
            elevation=float(np.arctan2(rxz - txz, total_h)),
            interactions=depth))

    # diffuse scatter: best candidate per (receiver, surface, depth) cell
    if cfg.diffuse and n_seg:
        occupied = np.argwhere(np.isfinite(dif_len))
        for k, s, d in occupied:
            k, s, d = int(k), int(s), int(d)
            rx2, rxz = rx_points[k, :2], rx_points[k, 2]
            hit = np.array([dif_px[k, s, d], dif_py[k, s, d]])
            if _blocked_full(surf, hit, rx2, skip=(s,), skip_owner=int(owners[k])):
                continue
            total_h = float(dif_len[k, s, d])
            d3 = float(np.hypot(total_h, rxz - txz))
            delay = d3 / C_LIGHT
            seq = [int(v) for v in dif_seq[k, s, d, :d + 1]]
            refl = float(np.prod(surf.refl[seq])) * DIFFUSE_FACTOR
            # Scatter phase is random by design, so the carrier term is
            # omitted: it would re-randomize the tap whenever the best cell
            # point moves by a fraction of a wavelength, making gains jump
            # between ray counts instead of converging.
            phase = np.pi * d + _stable_phase(seed, "dif", k, s, d)
            paths[k].append(PathComponent(
                amplitude=float(lam / (4.0 * np.pi * d3) * refl),
                phase=float(phase),
                delay=float(delay),
                azimuth=float(dif_az[k, s, d]),
                elevation=float(np.arctan2(rxz - txz, total_h)),
                interactions=d + 1))

    if cfg.diffraction and scene.buildings:
        for k in range(n_rx):
            rx2, rxz = rx_points[k, :2], rx_points[k, 2]
            paths[k].extend(_diffraction_paths(
                scene, surf, tx2, txz, rx2, rxz, int(owners[k]), lam, carrier_hz))

    # retain the strongest n_paths, then report in delay order
    out = []
    for k in range(n_rx):
        kept = sorted(paths[k], key=lambda p: (-p.amplitude, p.delay))[:cfg.n_paths]
        out.append(sorted(kept, key=lambda p: (p.delay, -p.amplitude)))
    return out


def trace_paths(scene: Scene, tx, rx, cfg: FidelityConfig, seed: int,
                carrier_hz: float = CARRIER_DEFAULT,
                exclude_vehicle: str | None = None) -> list[PathComponent]:
    """Trace a single link.  Seed one link with link_seed(master, tx, rx)."""
    owner = None
    if exclude_vehicle is not None:
        ids = scene.vehicle_ids()
        if exclude_vehicle not in ids:
            raise KeyError(f"vehicle {exclude_vehicle!r} not in scene")
        owner = [ids.index(exclude_vehicle)]
    result = trace_paths_batch(scene, tx, np.asarray(rx, dtype=float).reshape(1, 3),
                               cfg, seed, carrier_hz=carrier_hz,
                               exclude_owners=owner)
    return result[0]


# --------------------------------------------------------------------------
# CIR, channel vectors, gains


def synthesize_cir(paths: list[PathComponent]):
    """Sparse complex taps (delays, gains) sorted by delay.

    Taps closer than 1 ps merge coherently.
    """
    if not paths:
        return np.zeros(0), np.zeros(0, dtype=complex)
    items = sorted(paths, key=lambda p: p.delay)
    delays: list[float] = []
    gains: list[complex] = []
    for p in items:
        g = p.amplitude * np.exp(1j * p.phase)
        if delays and abs(p.delay - delays[-1]) < 1e-12:
            gains[-1] += g
        else:
            delays.append(p.delay)
            gains.append(g)
    return np.array(delays), np.array(gains, dtype=complex)


def channel_vector(paths: list[PathComponent], ula: UlaSpec,
                   carrier_hz: float = CARRIER_DEFAULT) -> np.ndarray:
    """Narrowband channel vector h (n_elements,) seen from the array.

    Each path contributes amplitude * e^{j phase} on the steering vector for
    its departure angle; a cosine downtilt projection stands in for the
    element pattern.
    """
    h = np.zeros(ula.n_elements, dtype=complex)
    if not paths:
        return h
    n = np.arange(ula.n_elements)
    for p in paths:
        sin_eff = np.sin(p.azimuth - ula.boresight) * np.cos(p.elevation)
        steer = np.exp(-1j * 2.0 * np.pi * ula.spacing_wl * n * sin_eff)
        proj = float(np.clip(np.cos(p.elevation - ula.downtilt), 0.05, 1.0))
        h = h + p.amplitude * proj * np.exp(1j * p.phase) * steer
    return h


def path_gain_db(h: np.ndarray, floor_db: float = GAIN_FLOOR_DB) -> float:
    """Average per-element power of h in dB, floored for empty links."""
    h = np.asarray(h)
    if h.ndim != 1 or len(h) == 0:
        raise DimensionMismatch(f"expected a 1-D channel vector, got shape {h.shape}")
    power = float(np.vdot(h, h).real) / len(h)
    if power <= 10.0 ** (floor_db / 10.0):
        return floor_db
    return max(float(10.0 * np.log10(power)), floor_db)


# --------------------------------------------------------------------------
# stochastic stand-in used by the baseline mode


@dataclass(frozen=True)
class StochasticParams:
    exponent_los: float = 2.1
    exponent_nlos: float = 3.2
    shadow_sigma_los_db: float = 4.0
    shadow_sigma_nlos_db: float = 8.0


def stochastic_gain_db(distance: float, los: bool,
                       params: StochasticParams = StochasticParams(),
                       carrier_hz: float = CARRIER_DEFAULT) -> float:
    """Median log-distance path gain (no shadowing) of the stand-in model."""
    lam = C_LIGHT / carrier_hz
    pl0 = 20.0 * np.log10(4.0 * np.pi / lam)
    exp = params.exponent_los if los else params.exponent_nlos
    return float(-(pl0 + 10.0 * exp * np.log10(max(distance, 1.0))))


def stochastic_baseline_channel(distance: float, los: bool, n_elements: int,
                                seed: int,
                                params: StochasticParams = StochasticParams(),
                                carrier_hz: float = CARRIER_DEFAULT) -> np.ndarray:
    """Log-distance + shadowing channel with random per-element phase.

    Carries no geometry beyond the distance and a LOS flag; used only as the
    reactive stochastic baseline.
    """
    rng = np.random.default_rng(np.random.PCG64(seed))
    sigma = params.shadow_sigma_los_db if los else params.shadow_sigma_nlos_db
    gain_db = stochastic_gain_db(distance, los, params, carrier_hz)
    gain_db += float(rng.normal(0.0, sigma))
    amp = 10.0 ** (gain_db / 20.0)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_elements)
    return amp * np.exp(1j * phases)


def los_clear(scene: Scene, tx, rx, vehicle_fidelity: int = 0,
              exclude_owner: int = -2) -> bool:
    """Altitude-aware direct-path visibility between two 3D points."""
    tx = np.asarray(tx.position if isinstance(tx, Rsu) else tx, dtype=float).reshape(3)
    rx = np.asarray(rx, dtype=float).reshape(3)
    surf = surface_set(scene, vehicle_fidelity)
    return not _blocked_los(surf, tx[:2], tx[2], rx[:2], rx[2], skip_owner=exclude_owner)


# --------------------------------------------------------------------------
# debug output


PATH_DUMP_HEADER = "link_id,amplitude,phase_rad,delay_s,azimuth_rad,elevation_rad,interactions"


def write_path_dump(rows: list[tuple[str, list[PathComponent]]], dest) -> None:
    """Per-link path dump CSV: one row per component, links in given order."""
    from pathlib import Path as _P
    own = isinstance(dest, (str, _P))
    fh = open(dest, "w", newline="") if own else dest
    try:
        fh.write(PATH_DUMP_HEADER + "\n")
        for link_id, paths in rows:
            for p in paths:
                fh.write(f"{link_id},{p.amplitude!r},{p.phase!r},{p.delay!r},"
                         f"{p.azimuth!r},{p.elevation!r},{p.interactions}\n")
    finally:
        if own:
            fh.close()
