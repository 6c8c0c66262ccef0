"""Manhattan-grid road network and deterministic car-following traffic.

Vehicles drive on lane lines offset to the right of each street's centerline
and cut corners on a short chamfer, so per-step displacement never exceeds
speed * dt and recorded traces satisfy the continuity validator by
construction.  All randomness flows from one seeded generator, which makes
trace generation byte-identical for identical inputs.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MalformedTrace, OutOfRange, OvercrowdedNetwork
from .scene import KIND_DIMS, Pose

DT_DEFAULT = 0.1
SPEED_LIMIT_DEFAULT = 14.0
DEFAULT_MIX = {"car": 0.8, "bus": 0.1, "box_truck": 0.1}

LANE_OFFSET = 1.6
CORNER_CUT = 4.0
MIN_GAP = 2.0
MAX_ACCEL = 2.5
MAX_DECEL = 4.5
HEADWAY = 1.0

TRACE_HEADER = "t,vehicle_id,kind,x,y,heading_rad,speed"


@dataclass(frozen=True)
class RoadNetwork:
    rows: int
    cols: int
    block_size: float
    speed_limit: float
    nodes: np.ndarray  # (n_nodes, 2)
    segments: tuple[tuple[int, int], ...]  # undirected, index pairs a < b

    @property
    def intersections(self) -> np.ndarray:
        return self.nodes


def generate_network(rows: int, cols: int, block_size: float,
                     speed_limit: float = SPEED_LIMIT_DEFAULT) -> RoadNetwork:
    """Grid of rows x cols square blocks with streets on every block edge."""
    if rows < 1 or cols < 1 or block_size <= 0:
        raise ValueError("rows, cols must be >= 1 and block_size > 0")
    if block_size < 4 * CORNER_CUT:
        raise ValueError(f"block_size must be >= {4 * CORNER_CUT} m")
    nodes = []
    index = {}
    for j in range(rows + 1):
        for i in range(cols + 1):
            index[(i, j)] = len(nodes)
            nodes.append((i * block_size, j * block_size))
    segments = []
    for j in range(rows + 1):
        for i in range(cols):
            segments.append((index[(i, j)], index[(i + 1, j)]))
    for j in range(rows):
        for i in range(cols + 1):
            segments.append((index[(i, j)], index[(i, j + 1)]))
    return RoadNetwork(rows=rows, cols=cols, block_size=float(block_size),
                       speed_limit=float(speed_limit),
                       nodes=np.array(nodes, dtype=float),
                       segments=tuple(sorted(segments)))


def _adjacency(net: RoadNetwork) -> dict[int, list[int]]:
    adj: dict[int, list[int]] = {i: [] for i in range(len(net.nodes))}
    for a, b in net.segments:
        adj[a].append(b)
        adj[b].append(a)
    for lst in adj.values():
        lst.sort()
    return adj


@dataclass(frozen=True)
class Trace:
    """Dense pose log: every vehicle present at every step, constant dt."""

    times: np.ndarray  # (n_steps,)
    ids: tuple[str, ...]
    kinds: tuple[str, ...]
    x: np.ndarray  # (n_steps, n_vehicles)
    y: np.ndarray
    heading: np.ndarray
    speed: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else DT_DEFAULT

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])


class _Car:
    __slots__ = ("kind", "length", "cur", "nxt", "prev", "s", "v")

    def __init__(self, kind, cur, nxt, prev, s, v):
        self.kind = kind
        self.length = KIND_DIMS[kind][0]
        self.cur = cur    # directed edge (node_a, node_b)
        self.nxt = nxt
        self.prev = prev  # may be None right after spawn
        self.s = s        # centerline arc length along cur, in [0, L)
        self.v = v


def _lane_point(nodes: np.ndarray, edge: tuple[int, int], s: float) -> np.ndarray:
    a, b = nodes[edge[0]], nodes[edge[1]]
    d = b - a
    length = np.hypot(*d)
    d = d / length
    right = np.array([d[1], -d[0]])
    return a + d * s + right * LANE_OFFSET


def _edge_dir(nodes: np.ndarray, edge: tuple[int, int]) -> np.ndarray:
    a, b = nodes[edge[0]], nodes[edge[1]]
    d = b - a
    return d / np.hypot(*d)


def _world_pose(nodes, car, edge_len) -> tuple[np.ndarray, float]:
    c = CORNER_CUT
    length = edge_len(car.cur)
    if car.s > length - c and car.nxt is not None:
        a_pt = _lane_point(nodes, car.cur, length - c)
        b_pt = _lane_point(nodes, car.nxt, c)
        u = car.s - (length - c)
        p = a_pt + (b_pt - a_pt) * (u / (2 * c))
        head = b_pt - a_pt
    elif car.s < c and car.prev is not None:
        prev_len = edge_len(car.prev)
        a_pt = _lane_point(nodes, car.prev, prev_len - c)
        b_pt = _lane_point(nodes, car.cur, c)
        u = c + car.s
        p = a_pt + (b_pt - a_pt) * (u / (2 * c))
        head = b_pt - a_pt
    else:
        p = _lane_point(nodes, car.cur, car.s)
        head = _edge_dir(nodes, car.cur)
    return p, float(np.arctan2(head[1], head[0]))


def generate_traffic(net: RoadNetwork, n_vehicles: int,
                     mix: dict[str, float] | None = None, seed: int = 0,
                     duration: float = 60.0, dt: float = DT_DEFAULT) -> Trace:
    """Simulate n_vehicles over a duration and return the dense trace.

    Spawn placement, kind assignment, and turn choices all come from one
    PCG64 generator seeded with `seed`.  Raises OvercrowdedNetwork when safe
    initial spacing cannot be found.
    """
    mix = dict(mix or DEFAULT_MIX)
    if abs(sum(mix.values()) - 1.0) > 1e-6:
        raise ValueError(f"kind mix must sum to 1, got {sum(mix.values())}")
    for kind in mix:
        if kind not in KIND_DIMS:
            raise ValueError(f"unknown vehicle kind in mix: {kind!r}")
    if n_vehicles < 0:
        raise ValueError("n_vehicles must be >= 0")
    if dt <= 0 or duration < 0:
        raise ValueError("dt must be > 0 and duration >= 0")

    rng = np.random.default_rng(seed)
    adj = _adjacency(net)
    nodes = net.nodes
    directed = [(a, b) for a, b in net.segments] + [(b, a) for a, b in net.segments]
    directed.sort()
    lengths = {e: float(np.hypot(*(nodes[e[1]] - nodes[e[0]]))) for e in directed}
    edge_len = lengths.__getitem__

    def pick_next(edge):
        a, b = edge
        options = [(b, n) for n in adj[b] if n != a]
        if not options:
            options = [(b, a)]
        return options[rng.integers(0, len(options))]

    kind_names = sorted(mix)
    kind_probs = np.array([mix[k] for k in kind_names])

    cars: list[_Car] = []
    occupancy: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for _ in range(n_vehicles):
        kind = kind_names[rng.choice(len(kind_names), p=kind_probs)]
        half = KIND_DIMS[kind][0] / 2
        placed = False
        for _attempt in range(500):
            edge = directed[rng.integers(0, len(directed))]
            length = lengths[edge]
            lo, hi = CORNER_CUT, length - CORNER_CUT
            if hi <= lo:
                continue
            s = float(rng.uniform(lo, hi))
            ok = all(abs(s - s0) >= half + h0 + MIN_GAP + 1.0
                     for s0, h0 in occupancy.get(edge, []))
            if ok:
                occupancy.setdefault(edge, []).append((s, half))
                v0 = float(rng.uniform(0.5, 0.9) * net.speed_limit)
                cars.append(_Car(kind, edge, pick_next(edge), None, s, v0))
                placed = True
                break
        if not placed:
            raise OvercrowdedNetwork(
                f"could not place vehicle {len(cars)} of {n_vehicles} with safe spacing")

    n_steps = int(round(duration / dt)) + 1
    ids = tuple(f"veh{i}" for i in range(len(cars)))
    kinds = tuple(c.kind for c in cars)
    xs = np.zeros((n_steps, len(cars)))
    ys = np.zeros((n_steps, len(cars)))
    heads = np.zeros((n_steps, len(cars)))
    speeds = np.zeros((n_steps, len(cars)))

    for step in range(n_steps):
        for k, car in enumerate(cars):
            p, h = _world_pose(nodes, car, edge_len)
            xs[step, k], ys[step, k] = p
            heads[step, k] = h
            speeds[step, k] = car.v
        if step == n_steps - 1:
            break

        by_edge: dict[tuple[int, int], list[_Car]] = {}
        for car in cars:
            by_edge.setdefault(car.cur, []).append(car)
        new_speed = {}
        for edge, group in by_edge.items():
            group.sort(key=lambda c: -c.s)
            for idx, car in enumerate(group):
                target = net.speed_limit
                if idx > 0:
                    leader = group[idx - 1]
                    gap = leader.s - car.s - (leader.length + car.length) / 2
                    target = min(target, max(0.0, (gap - MIN_GAP) / HEADWAY))
                accel = np.clip((target - car.v) / dt, -MAX_DECEL, MAX_ACCEL)
                new_speed[id(car)] = max(0.0, car.v + accel * dt)
        for car in cars:
            car.v = new_speed[id(car)]
            car.s += car.v * dt
            length = edge_len(car.cur)
            if car.s >= length:
                car.s -= length
                car.prev = car.cur
                car.cur = car.nxt
                car.nxt = pick_next(car.cur)

    times = np.arange(n_steps) * dt
    return Trace(times=times, ids=ids, kinds=kinds, x=xs, y=ys,
                 heading=heads, speed=speeds)


# --------------------------------------------------------------------------
# sampling and serialization


def sample_poses(trace: Trace, t: float) -> dict[str, Pose]:
    """Poses at the recorded step nearest to t; t must lie within the trace."""
    t0, t1 = float(trace.times[0]), float(trace.times[-1])
    if t < t0 - 1e-9 or t > t1 + 1e-9:
        raise OutOfRange(f"t={t} outside trace span [{t0}, {t1}]")
    idx = int(np.argmin(np.abs(trace.times - t)))
    return {
        vid: Pose(position=np.array([trace.x[idx, k], trace.y[idx, k]]),
                  heading=float(trace.heading[idx, k]),
                  speed=float(trace.speed[idx, k]))
        for k, vid in enumerate(trace.ids)
    }


def kind_map(trace: Trace) -> dict[str, str]:
    return dict(zip(trace.ids, trace.kinds))


def export_trace(trace: Trace, dest) -> None:
    """Write the trace as CSV.  Floats use repr so round-trips are exact."""
    own = isinstance(dest, (str, Path))
    fh = open(dest, "w", newline="") if own else dest
    try:
        fh.write(TRACE_HEADER + "\n")
        for i in range(len(trace.times)):
            t = repr(float(trace.times[i]))
            for k, vid in enumerate(trace.ids):
                fh.write(f"{t},{vid},{trace.kinds[k]},"
                         f"{float(trace.x[i, k])!r},{float(trace.y[i, k])!r},"
                         f"{float(trace.heading[i, k])!r},"
                         f"{float(trace.speed[i, k])!r}\n")
    finally:
        if own:
            fh.close()


def trace_to_csv(trace: Trace) -> str:
    buf = io.StringIO()
    export_trace(trace, buf)
    return buf.getvalue()


def validate_trace(trace: Trace, max_speed: float = SPEED_LIMIT_DEFAULT) -> None:
    """Raise MalformedTrace on timing, continuity, or value violations.

    The continuity bound allows (max_speed + 5) meters per second of motion,
    a deliberate slack over the nominal limit.
    """
    times = trace.times
    if len(times) == 0:
        raise MalformedTrace("trace has no steps")
    if len(times) > 1:
        diffs = np.diff(times)
        if np.any(diffs <= 0):
            raise MalformedTrace("timestamps must be strictly increasing")
        if np.any(np.abs(diffs - diffs[0]) > 1e-6):
            raise MalformedTrace("time step is not constant")
        bound = (max_speed + 5.0) * float(diffs[0])
        disp = np.hypot(np.diff(trace.x, axis=0), np.diff(trace.y, axis=0))
        if disp.size and float(disp.max()) > bound:
            k = np.unravel_index(int(np.argmax(disp)), disp.shape)
            raise MalformedTrace(
                f"vehicle {trace.ids[k[1]]} moved {disp[k]:.2f} m in one step "
                f"(bound {bound:.2f} m)")
    if np.any(trace.speed < 0):
        raise MalformedTrace("negative speed in trace")


def ingest_trace(source, max_speed: float = SPEED_LIMIT_DEFAULT) -> Trace:
    """Parse and validate a trace CSV from a path, file object, or string."""
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        text = Path(source).read_text()
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise MalformedTrace(f"expected header {TRACE_HEADER!r}")

    rows = []
    for n, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 7:
            raise MalformedTrace(f"line {n}: expected 7 fields, got {len(parts)}")
        try:
            rows.append((float(parts[0]), parts[1], parts[2], float(parts[3]),
                         float(parts[4]), float(parts[5]), float(parts[6])))
        except ValueError as exc:
            raise MalformedTrace(f"line {n}: {exc}") from exc
    if not rows:
        raise MalformedTrace("trace has no data rows")

    times = sorted({r[0] for r in rows})
    ids = sorted({r[1] for r in rows})
    id_idx = {vid: k for k, vid in enumerate(ids)}
    t_idx = {t: i for i, t in enumerate(times)}
    kinds: dict[str, str] = {}
    seen = np.zeros((len(times), len(ids)), dtype=bool)
    xs = np.zeros((len(times), len(ids)))
    ys = np.zeros_like(xs)
    heads = np.zeros_like(xs)
    speeds = np.zeros_like(xs)
    for t, vid, kind, x, y, h, v in rows:
        if kind not in KIND_DIMS:
            raise MalformedTrace(f"unknown vehicle kind {kind!r}")
        if kinds.setdefault(vid, kind) != kind:
            raise MalformedTrace(f"vehicle {vid} changes kind mid-trace")
        i, k = t_idx[t], id_idx[vid]
        if seen[i, k]:
            raise MalformedTrace(f"duplicate row for {vid} at t={t}")
        seen[i, k] = True
        xs[i, k], ys[i, k], heads[i, k], speeds[i, k] = x, y, h, v
    if not seen.all():
        raise MalformedTrace("every vehicle must appear at every time step")

    trace = Trace(times=np.array(times), ids=tuple(ids),
                  kinds=tuple(kinds[vid] for vid in ids),
                  x=xs, y=ys, heading=heads, speed=speeds)
    validate_trace(trace, max_speed=max_speed)
    return trace
