"""Static and dynamic scene model.

A scene is a flat ground plane at z = 0, extruded building footprints, a set
of roadside units (RSUs) mounted above ground, and vehicles described by
unions of oriented boxes at one of four geometric detail levels.  All
coordinates are meters, all angles radians (map files use degrees).  Scenes
are treated as immutable snapshots: pose updates return a new scene and never
mutate shared static geometry.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import MalformedMap, UnknownVehicleKind
from .geometry import (SurfaceSet, polygon_area, polygon_is_simple, rot2,
                       wrap_angle)

MATERIALS = {"concrete": 0.6, "metal": 0.9, "ground": 0.4}
VEHICLE_REFLECTIVITY = MATERIALS["metal"]

#: bounding dimensions (length, width, height) per supported vehicle kind
KIND_DIMS = {
    "car": (4.5, 1.8, 1.5),
    "bus": (12.0, 2.5, 3.2),
    "box_truck": (8.0, 2.5, 3.5),
}

#: height of the antenna mount above the vehicle roof
ANTENNA_MOUNT = 0.2

MAX_FIDELITY = 3
_BOX_COUNTS = (1, 2, 4, 7)


@dataclass(frozen=True)
class Pose:
    """Ground-plane pose: position (m), heading (rad, wrapped), speed (m/s)."""

    position: np.ndarray
    heading: float
    speed: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(2)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))
        if self.speed < 0:
            raise ValueError(f"speed must be non-negative, got {self.speed}")


@dataclass(frozen=True)
class BoxPrim:
    """Axis-aligned box in the vehicle frame: center offset and half extents."""

    center: tuple[float, float, float]
    half: tuple[float, float, float]


@dataclass(frozen=True)
class VehicleBody:
    kind: str
    fidelity: int
    primitives: tuple[BoxPrim, ...]
    reflectivity: float = VEHICLE_REFLECTIVITY


@dataclass(frozen=True)
class Building:
    footprint: np.ndarray  # (n, 2) counter-clockwise
    height: float
    reflectivity: float


@dataclass(frozen=True)
class Rsu:
    position: np.ndarray  # (3,)
    downtilt: float  # rad, negative points below horizon
    boresight: float  # rad, azimuth the array broadside faces


@dataclass(frozen=True)
class VehicleState:
    kind: str
    pose: Pose
    body: VehicleBody


@dataclass(frozen=True)
class Scene:
    buildings: tuple[Building, ...]
    vehicles: dict[str, VehicleState] = field(default_factory=dict)
    rsus: tuple[Rsu, ...] = ()
    ground_reflectivity: float = MATERIALS["ground"]

    def vehicle_ids(self) -> list[str]:
        return sorted(self.vehicles)


# --------------------------------------------------------------------------
# vehicle geometry catalog


def _car_boxes(level: int) -> list[BoxPrim]:
    if level == 0:
        return [BoxPrim((0, 0, 0.75), (2.25, 0.9, 0.75))]
    if level == 1:
        return [
            BoxPrim((0, 0, 0.45), (2.25, 0.9, 0.45)),
            BoxPrim((-0.2, 0, 1.2), (1.2, 0.85, 0.3)),
        ]
    if level == 2:
        return [
            BoxPrim((0, 0, 0.45), (2.25, 0.9, 0.45)),
            BoxPrim((1.5, 0, 0.975), (0.75, 0.85, 0.075)),
            BoxPrim((-0.2, 0, 1.2), (1.1, 0.85, 0.3)),
            BoxPrim((-1.75, 0, 0.975), (0.5, 0.85, 0.075)),
        ]
    return [
        BoxPrim((2.1, 0, 0.4), (0.15, 0.9, 0.4)),
        BoxPrim((0, 0, 0.45), (1.95, 0.9, 0.45)),
        BoxPrim((-2.1, 0, 0.4), (0.15, 0.9, 0.4)),
        BoxPrim((1.5, 0, 0.975), (0.75, 0.85, 0.075)),
        BoxPrim((-0.2, 0, 1.05), (1.1, 0.8, 0.15)),
        BoxPrim((-0.2, 0, 1.35), (0.95, 0.75, 0.15)),
        BoxPrim((-1.75, 0, 0.975), (0.5, 0.85, 0.075)),
    ]


def _bus_boxes(level: int) -> list[BoxPrim]:
    if level == 0:
        return [BoxPrim((0, 0, 1.6), (6.0, 1.25, 1.6))]
    if level == 1:
        return [
            BoxPrim((0, 0, 1.25), (6.0, 1.25, 1.25)),
            BoxPrim((0, 0, 2.85), (5.9, 1.2, 0.35)),
        ]
    if level == 2:
        return [
            BoxPrim((0, 0, 0.25), (6.0, 1.25, 0.25)),
            BoxPrim((0, 0, 1.5), (6.0, 1.22, 1.0)),
            BoxPrim((0, 0, 2.85), (5.9, 1.2, 0.35)),
            BoxPrim((5.9, 0, 0.8), (0.1, 1.2, 0.8)),
        ]
    return [
        BoxPrim((0, 0, 0.25), (6.0, 1.25, 0.25)),
        BoxPrim((3.0, 0, 1.5), (3.0, 1.22, 1.0)),
        BoxPrim((-3.0, 0, 1.5), (3.0, 1.22, 1.0)),
        BoxPrim((3.0, 0, 2.85), (2.9, 1.18, 0.35)),
        BoxPrim((-3.0, 0, 2.85), (2.9, 1.18, 0.35)),
        BoxPrim((5.92, 0, 1.6), (0.08, 1.2, 1.4)),
        BoxPrim((0, 0, 3.05), (1.5, 0.9, 0.15)),
    ]


def _box_truck_boxes(level: int) -> list[BoxPrim]:
    if level == 0:
        return [BoxPrim((0, 0, 1.75), (4.0, 1.25, 1.75))]
    if level == 1:
        return [
            BoxPrim((3.0, 0, 1.4), (1.0, 1.2, 1.4)),
            BoxPrim((-1.0, 0, 1.75), (3.0, 1.25, 1.75)),
        ]
    if level == 2:
        return [
            BoxPrim((0, 0, 0.5), (4.0, 1.2, 0.5)),
            BoxPrim((3.0, 0, 1.9), (1.0, 1.2, 0.9)),
            BoxPrim((-1.0, 0, 2.25), (3.0, 1.25, 1.25)),
            BoxPrim((3.95, 0, 0.6), (0.05, 1.2, 0.6)),
        ]
    return [
        BoxPrim((0, 0, 0.5), (4.0, 1.2, 0.5)),
        BoxPrim((3.0, 0, 1.65), (1.0, 1.18, 0.65)),
        BoxPrim((3.0, 0, 2.55), (0.95, 1.1, 0.25)),
        BoxPrim((-1.0, 0, 2.2), (2.95, 1.25, 1.2)),
        BoxPrim((-1.0, 0, 3.45), (2.9, 1.2, 0.05)),
        BoxPrim((3.95, 0, 0.4), (0.05, 1.2, 0.4)),
        BoxPrim((-3.97, 0, 0.35), (0.03, 1.1, 0.35)),
    ]


_CATALOG = {"car": _car_boxes, "bus": _bus_boxes, "box_truck": _box_truck_boxes}


def vehicle_geometry(kind: str, fidelity: int) -> VehicleBody:
    """Box-union body for a vehicle kind at a detail level in 0..3.

    Box counts per level are (1, 2, 4, 7); every box lies inside the kind's
    bounding dimensions, so raising the level never enlarges the silhouette.
    """
    if kind not in _CATALOG:
        raise UnknownVehicleKind(f"unknown vehicle kind {kind!r}")
    if not (0 <= int(fidelity) <= MAX_FIDELITY):
        raise ValueError(f"fidelity must be in 0..{MAX_FIDELITY}, got {fidelity}")
    boxes = tuple(_CATALOG[kind](int(fidelity)))
    assert len(boxes) == _BOX_COUNTS[int(fidelity)]
    return VehicleBody(kind=kind, fidelity=int(fidelity), primitives=boxes)


def antenna_height(kind: str) -> float:
    """Roof-mounted antenna height above ground for a vehicle kind."""
    if kind not in KIND_DIMS:
        raise UnknownVehicleKind(f"unknown vehicle kind {kind!r}")
    return KIND_DIMS[kind][2] + ANTENNA_MOUNT


def antenna_position(state: VehicleState) -> np.ndarray:
    """3D antenna location of a vehicle state."""
    x, y = state.pose.position
    return np.array([x, y, antenna_height(state.kind)])


# --------------------------------------------------------------------------
# map loading


def _building_from_entry(idx: int, entry: dict) -> Building:
    if not isinstance(entry, dict) or "polygon" not in entry:
        raise MalformedMap(f"buildings[{idx}]: expected a mapping with 'polygon'")
    pts = np.asarray(entry["polygon"], dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise MalformedMap(f"buildings[{idx}]: polygon needs >= 3 [x, y] vertices")
    if not polygon_is_simple(pts):
        raise MalformedMap(f"buildings[{idx}]: polygon is self-intersecting or degenerate")
    if polygon_area(pts) < 0:
        pts = pts[::-1].copy()
    height = float(entry.get("height", 0.0))
    if height <= 0:
        raise MalformedMap(f"buildings[{idx}]: height must be > 0, got {height}")
    if "reflectivity" in entry:
        refl = float(entry["reflectivity"])
    else:
        material = entry.get("material", "concrete")
        if material not in MATERIALS:
            raise MalformedMap(f"buildings[{idx}]: unknown material {material!r}")
        refl = MATERIALS[material]
    if not (0.0 < refl <= 1.0):
        raise MalformedMap(f"buildings[{idx}]: reflectivity must be in (0, 1], got {refl}")
    return Building(footprint=pts, height=height, reflectivity=refl)


def build_scene(map_source) -> Scene:
    """Construct a static scene from a map file path or a parsed mapping.

    The map schema has optional top-level keys `buildings`, `roads`, and
    `rsus`; angles in the file are degrees.  An empty mapping is a valid map
    (bare ground plane).  Raises MalformedMap on any schema violation.
    """
    if isinstance(map_source, (str, Path)):
        try:
            raw = Path(map_source).read_text()
        except OSError as exc:
            raise MalformedMap(f"cannot read map file {map_source}: {exc}") from exc
        try:
            data = yaml.safe_load(raw) or {}
        except yaml.YAMLError as exc:
            raise MalformedMap(f"map file {map_source} is not valid YAML: {exc}") from exc
    else:
        data = map_source or {}
    if not isinstance(data, dict):
        raise MalformedMap("map root must be a mapping")
    unknown = set(data) - {"buildings", "roads", "rsus", "ground"}
    if unknown:
        raise MalformedMap(f"unknown map keys: {sorted(unknown)}")

    buildings = tuple(_building_from_entry(i, b)
                      for i, b in enumerate(data.get("buildings") or []))

    centroid = np.zeros(2)
    pts = [b.footprint for b in buildings]
    if pts:
        allpts = np.vstack(pts)
        centroid = allpts.mean(axis=0)

    rsus = []
    for i, entry in enumerate(data.get("rsus") or []):
        if not isinstance(entry, dict):
            raise MalformedMap(f"rsus[{i}]: expected a mapping")
        try:
            x, y, z = float(entry["x"]), float(entry["y"]), float(entry["z"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedMap(f"rsus[{i}]: needs numeric x, y, z") from exc
        if z <= 0:
            raise MalformedMap(f"rsus[{i}]: mount height must be > 0, got {z}")
        downtilt = np.deg2rad(float(entry.get("downtilt_deg", -11.0)))
        if "azimuth_deg" in entry:
            boresight = wrap_angle(np.deg2rad(float(entry["azimuth_deg"])))
        else:
            look = centroid - np.array([x, y])
            boresight = float(np.arctan2(look[1], look[0])) if np.hypot(*look) > 1e-6 else 0.0
        rsus.append(Rsu(position=np.array([x, y, z]), downtilt=float(downtilt),
                        boresight=boresight))

    ground = data.get("ground") or {}
    g_material = ground.get("material", "ground")
    if g_material not in MATERIALS:
        raise MalformedMap(f"ground: unknown material {g_material!r}")

    return Scene(buildings=buildings, vehicles={}, rsus=tuple(rsus),
                 ground_reflectivity=MATERIALS[g_material])


# --------------------------------------------------------------------------
# dynamic updates


def update_poses(scene: Scene, poses: dict[str, Pose], fidelity: int | None = None,
                 kinds: dict[str, str] | None = None) -> Scene:
    """Return a new scene with vehicles moved to the given poses.

    Vehicles absent from `poses` are left untouched.  Ids not yet in the
    scene must have their kind supplied through `kinds`.  When `fidelity` is
    given every touched vehicle's body is rebuilt at that detail level.
    """
    kinds = kinds or {}
    vehicles = dict(scene.vehicles)
    for vid, pose in poses.items():
        if vid in vehicles:
            kind = vehicles[vid].kind
            body = vehicles[vid].body
        elif vid in kinds:
            kind = kinds[vid]
            body = None
        else:
            raise UnknownVehicleKind(f"vehicle {vid!r} is new and no kind was given")
        if body is None or (fidelity is not None and body.fidelity != fidelity):
            body = vehicle_geometry(kind, fidelity if fidelity is not None else 0)
        vehicles[vid] = VehicleState(kind=kind, pose=pose, body=body)
    return Scene(buildings=scene.buildings, vehicles=vehicles, rsus=scene.rsus,
                 ground_reflectivity=scene.ground_reflectivity)


def scene_with_fidelity(scene: Scene, fidelity: int) -> Scene:
    """Rebuild every vehicle body at the requested detail level."""
    vehicles = {
        vid: VehicleState(st.kind, st.pose, vehicle_geometry(st.kind, fidelity))
        if st.body.fidelity != fidelity else st
        for vid, st in scene.vehicles.items()
    }
    return Scene(buildings=scene.buildings, vehicles=vehicles, rsus=scene.rsus,
                 ground_reflectivity=scene.ground_reflectivity)


def box_footprint(prim: BoxPrim, pose: Pose) -> np.ndarray:
    """World-frame footprint corners (4, 2) of one body box under a pose."""
    rot = rot2(pose.heading)
    cx, cy, _ = prim.center
    hx, hy, _ = prim.half
    local = np.array([[cx - hx, cy - hy], [cx + hx, cy - hy],
                      [cx + hx, cy + hy], [cx - hx, cy + hy]])
    return pose.position + local @ rot.T


def surface_set(scene: Scene, vehicle_fidelity: int | None = None) -> SurfaceSet:
    """Flatten a scene into vertical surface segments for the tracer.

    Building walls span z in [0, height].  Vehicle boxes contribute their four
    footprint edges spanning each box's own z interval; bodies are rebuilt at
    `vehicle_fidelity` when given, otherwise the stored level is used.  The
    owner column maps vehicle segments to the sorted-id index of their vehicle.
    """
    rows: list[tuple] = []
    for b in scene.buildings:
        n = len(b.footprint)
        for i in range(n):
            a = b.footprint[i]
            c = b.footprint[(i + 1) % n]
            rows.append((a[0], a[1], c[0], c[1], 0.0, b.height, b.reflectivity, -1))
    for uidx, vid in enumerate(scene.vehicle_ids()):
        st = scene.vehicles[vid]
        body = st.body
        if vehicle_fidelity is not None and body.fidelity != vehicle_fidelity:
            body = vehicle_geometry(st.kind, vehicle_fidelity)
        for prim in body.primitives:
            corners = box_footprint(prim, st.pose)
            z0 = prim.center[2] - prim.half[2]
            z1 = prim.center[2] + prim.half[2]
            for i in range(4):
                a = corners[i]
                c = corners[(i + 1) % 4]
                rows.append((a[0], a[1], c[0], c[1], z0, z1, body.reflectivity, uidx))
    return SurfaceSet.from_rows(rows)


def snapshot(scene: Scene) -> Scene:
    """Deep copy used by tests to verify tracing never mutates a scene."""
    return copy.deepcopy(scene)
