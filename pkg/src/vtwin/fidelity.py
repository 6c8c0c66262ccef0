"""Latency-budgeted fidelity selection for the ray-traced channel stage.

Phase 1 of the control loop benchmarks candidate simulator configurations on
a scene snapshot: ground-truth gains are traced once at the reference
configuration, each candidate is scored by its path-gain RMSE against them,
and the cheapest-to-estimate feasible candidate with the lowest RMSE wins.
Estimated latency comes from a deterministic cost model rather than wall
clocks so runs are reproducible machine to machine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import (CARRIER_DEFAULT, FidelityConfig, UlaSpec, channel_vector,
                      path_gain_db, trace_paths_batch, link_seed)
from .errors import LinkSetMismatch, NegativeBudget, NoFeasibleConfig
from .scene import Scene, antenna_position, surface_set


@dataclass(frozen=True)
class BudgetSpec:
    """Pipeline stage times (ms) that carve the tracing budget out of a TTI."""

    t_horizon_ms: float = 1000.0
    t_position_ms: float = 100.0
    t_trajpred_ms: float = 10.0
    t_rrm_cloud_ms: float = 50.0
    t_overhead_ms: float = 20.0
    t_guard_ms: float = 50.0
    kappa: float = 1.0


def compute_budget(spec: BudgetSpec) -> float:
    """Tracing time available per TTI, in ms; raises NegativeBudget if none."""
    budget = (spec.t_horizon_ms - spec.t_position_ms - spec.t_trajpred_ms
              - spec.kappa * (spec.t_rrm_cloud_ms + spec.t_overhead_ms)
              - spec.t_guard_ms)
    if budget <= 0:
        raise NegativeBudget(
            f"stage times leave no tracing budget ({budget:.3f} ms <= 0)")
    return float(budget)


@dataclass(frozen=True)
class LatencyModel:
    """Coefficients of the deterministic tracing cost model.

    Cost units: n_rays * (launch + max_depth * (bounce + isect * n_segments))
    + path * n_paths + scene * n_primitives, times the diffraction surcharge
    when enabled, converted to ms and scaled by the edge/cloud speed ratio
    kappa by estimate_latency.
    """

    ms_per_unit: float = 1.2875e-5
    per_ray_launch: float = 50.0
    per_intersection: float = 1.0
    per_bounce: float = 20.0
    per_path: float = 0.2
    per_primitive: float = 50.0
    diffraction_surcharge: float = 8.0


@dataclass(frozen=True)
class SceneStats:
    n_segments: int
    n_primitives: int

    @staticmethod
    def of(scene: Scene, vehicle_fidelity: int) -> "SceneStats":
        surf = surface_set(scene, vehicle_fidelity)
        n_veh_segs = int(np.sum(surf.owner >= 0))
        return SceneStats(n_segments=len(surf), n_primitives=n_veh_segs // 4)


def estimate_latency(cfg: FidelityConfig, scene: Scene | SceneStats,
                     model: LatencyModel = LatencyModel(),
                     kappa: float = 1.0) -> float:
    """Estimated tracing latency (ms) of a configuration on a scene snapshot."""
    stats = scene if isinstance(scene, SceneStats) \
        else SceneStats.of(scene, cfg.vehicle_fidelity)
    units = cfg.n_rays * (model.per_ray_launch
                          + cfg.max_depth * (model.per_bounce
                                             + model.per_intersection * stats.n_segments))
    units += model.per_path * cfg.n_paths
    units += model.per_primitive * stats.n_primitives
    if cfg.diffraction:
        units *= model.diffraction_surcharge
    return float(kappa * model.ms_per_unit * units)


def rmse_path_gain(test_gains: dict, ref_gains: dict) -> float:
    """Root mean square difference of per-link path gains in dB."""
    if set(test_gains) != set(ref_gains):
        raise LinkSetMismatch(
            f"link sets differ: {sorted(set(test_gains) ^ set(ref_gains))[:5]} ...")
    if not ref_gains:
        raise LinkSetMismatch("empty link set")
    keys = sorted(test_gains)
    diff = np.array([test_gains[k] - ref_gains[k] for k in keys], dtype=float)
    return float(np.sqrt(np.mean(diff ** 2)))


# --------------------------------------------------------------------------
# candidate benchmarking


DEFAULT_GROUND_TRUTH = FidelityConfig(n_rays=10 ** 6, max_depth=10,
                                      n_paths=10 ** 7, diffuse=True,
                                      diffraction=True, vehicle_fidelity=3)


def default_candidates() -> list[FidelityConfig]:
    """Reference sweep grid: ray counts by decade, depth, diffuse, body detail."""
    grid = []
    for n_rays in (10 ** 2, 10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6):
        for depth in (2, 4, 6, 10):
            for diffuse in (False, True):
                for fv in (0, 1, 2, 3):
                    grid.append(FidelityConfig(
                        n_rays=n_rays, max_depth=depth, n_paths=10 * n_rays,
                        diffuse=diffuse, diffraction=False, vehicle_fidelity=fv))
    return grid


@dataclass(frozen=True)
class CandidateEval:
    index: int
    cfg: FidelityConfig
    est_latency_ms: float
    rmse_db: float | None
    feasible: bool
    chosen: bool


@dataclass(frozen=True)
class FidelityDecision:
    cfg: FidelityConfig
    est_latency_ms: float
    rmse_db: float
    budget_ms: float
    fallback: bool
    evaluations: tuple[CandidateEval, ...] = field(default=())


def snapshot_gains(scene: Scene, cfg: FidelityConfig, seed: int,
                   ula: UlaSpec, carrier_hz: float = CARRIER_DEFAULT) -> dict:
    """Per-link path gain (dB) between every RSU and vehicle antenna.

    Links are keyed (vehicle_id, rsu_index).  Each RSU's fan is seeded from
    the master seed and its index, so results do not depend on evaluation
    order or worker scheduling.
    """
    ids = scene.vehicle_ids()
    gains: dict = {}
    if not ids or not scene.rsus:
        return gains
    rx = np.array([antenna_position(scene.vehicles[v]) for v in ids])
    owners = np.arange(len(ids))
    for b, rsu in enumerate(scene.rsus):
        per_rx = trace_paths_batch(scene, rsu, rx, cfg,
                                   seed=link_seed(seed, f"rsu{b}", "fan"),
                                   carrier_hz=carrier_hz, exclude_owners=owners)
        spec = UlaSpec(n_elements=ula.n_elements, spacing_wl=ula.spacing_wl,
                       boresight=rsu.boresight, downtilt=rsu.downtilt)
        for k, vid in enumerate(ids):
            gains[(vid, b)] = path_gain_db(channel_vector(per_rx[k], spec, carrier_hz))
    return gains


def select_fidelity(scene: Scene, candidates: list[FidelityConfig],
                    gt_cfg: FidelityConfig, budget_spec: BudgetSpec,
                    ula: UlaSpec, seed: int,
                    model: LatencyModel = LatencyModel(),
                    carrier_hz: float = CARRIER_DEFAULT,
                    allow_fallback: bool = False) -> FidelityDecision:
    """Pick the feasible candidate with the lowest RMSE against ground truth.

    Ties break on lower estimated latency, then candidate order.  With no
    feasible candidate the call raises NoFeasibleConfig, or, when
    allow_fallback is set, returns the cheapest candidate flagged as a
    fallback.  gt_cfg must dominate every candidate on every knob.
    """
    if not candidates:
        raise ValueError("candidate list is empty")
    for cand in candidates:
        if not gt_cfg.dominates(cand):
            raise ValueError(
                f"ground truth {gt_cfg.label()} does not dominate candidate {cand.label()}")
    budget = compute_budget(budget_spec)
    ref = snapshot_gains(scene, gt_cfg, seed, ula, carrier_hz)
    if not ref:
        raise ValueError("scene snapshot has no links (needs vehicles and RSUs)")

    evals: list[CandidateEval] = []
    best: tuple[float, float, int] | None = None  # (rmse, latency, index)
    for idx, cand in enumerate(candidates):
        est = estimate_latency(cand, SceneStats.of(scene, cand.vehicle_fidelity),
                               model, budget_spec.kappa)
        feasible = est <= budget
        rmse = None
        if feasible:
            test = snapshot_gains(scene, cand, seed, ula, carrier_hz)
            rmse = rmse_path_gain(test, ref)
            if best is None or (rmse, est, idx) < best:
                best = (rmse, est, idx)
        evals.append(CandidateEval(index=idx, cfg=cand, est_latency_ms=est,
                                   rmse_db=rmse, feasible=feasible, chosen=False))

    if best is None:
        if not allow_fallback:
            raise NoFeasibleConfig(
                f"no candidate fits tracing budget {budget:.1f} ms")
        cheapest = min(range(len(evals)), key=lambda i: (evals[i].est_latency_ms, i))
        test = snapshot_gains(scene, candidates[cheapest], seed, ula, carrier_hz)
        rmse = rmse_path_gain(test, ref)
        evals[cheapest] = CandidateEval(
            index=cheapest, cfg=candidates[cheapest],
            est_latency_ms=evals[cheapest].est_latency_ms, rmse_db=rmse,
            feasible=False, chosen=True)
        return FidelityDecision(cfg=candidates[cheapest],
                                est_latency_ms=evals[cheapest].est_latency_ms,
                                rmse_db=rmse, budget_ms=budget, fallback=True,
                                evaluations=tuple(evals))

    rmse, est, idx = best
    evals[idx] = CandidateEval(index=idx, cfg=candidates[idx], est_latency_ms=est,
                               rmse_db=rmse, feasible=True, chosen=True)
    return FidelityDecision(cfg=candidates[idx], est_latency_ms=est, rmse_db=rmse,
                            budget_ms=budget, fallback=False,
                            evaluations=tuple(evals))


DECISION_LOG_HEADER = ("timestamp,candidate,n_rays,max_depth,n_paths,diffuse,"
                       "diffraction,vehicle_fidelity,est_latency_ms,rmse_db,"
                       "feasible,chosen")


def write_decision_log(rows: list[tuple[float, FidelityDecision]], dest) -> None:
    """CSV log of every candidate evaluation across calibration events."""
    from pathlib import Path as _P
    own = isinstance(dest, (str, _P))
    fh = open(dest, "w", newline="") if own else dest
    try:
        fh.write(DECISION_LOG_HEADER + "\n")
        for stamp, decision in rows:
            for ev in decision.evaluations:
                rmse = "" if ev.rmse_db is None else repr(ev.rmse_db)
                fh.write(f"{stamp!r},{ev.index},{ev.cfg.n_rays},{ev.cfg.max_depth},"
                         f"{ev.cfg.n_paths},{int(ev.cfg.diffuse)},"
                         f"{int(ev.cfg.diffraction)},{ev.cfg.vehicle_fidelity},"
                         f"{ev.est_latency_ms!r},{rmse},{int(ev.feasible)},"
                         f"{int(ev.chosen)}\n")
    finally:
        if own:
            fh.close()
