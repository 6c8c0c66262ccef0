"""Closed-loop episode runner tying mobility, prediction, tracing, and RRM.

Each TTI the edge pipeline runs: acquire stale noisy positions, predict ahead
(predictive mode), rebuild the scene, trace channels at the active fidelity,
optimize beams and association, then score those decisions against
ground-truth channels at the true poses of the scoring instant.  A cloud
calibration (fidelity re-selection) fires on its own cadence and publishes
the configuration used by subsequent TTIs.  Stage latencies are virtual,
produced by the deterministic cost model, so identical runs are reproducible
anywhere.

Mode semantics:

* predictive: decide on poses predicted from data aged t_position; score at
  the decision time plus one horizon.
* reactive: decide on poses aged `staleness`, no prediction; score at the
  decision time.
* oracle: decide on true future poses with ground-truth fidelity and no
  latency penalties; an idealized upper bound.
* stochastic_baseline: reactive timing, but channels come from the
  log-distance stand-in instead of ray tracing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import channel as ch
from . import fidelity as fid
from . import mobility, predictor, rrm
from .errors import ConfigError
from .phy import LinkBudget, dft_codebook, gain_tensor, sinr_linear
from .rrm import EvalResult, EvalScore, RrmParams, network_metrics
from .scene import Scene, antenna_position, update_poses

MODES = ("predictive", "reactive", "oracle", "stochastic_baseline")
STOCHASTIC_TRACE_MS = 1.0


def sub_seed(*parts) -> int:
    text = "|".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "little")


@dataclass(frozen=True)
class EpisodeConfig:
    mode: str
    seed: int
    n_ttis: int
    static_scene: Scene
    trace: mobility.Trace
    tti_s: float = 1.0
    horizon_s: float = 1.0
    t_update_s: float = 10.0
    staleness_s: float = 1.0
    position_noise_m: float = 0.02
    history_steps: int = predictor.HISTORY_STEPS
    predictor_method: str = "kf"
    kf_q_var: float = predictor.KF_Q_VAR
    kf_r: float = predictor.KF_R_VAR
    kf_p0_v: float = predictor.KF_P0_VEL
    link_budget: LinkBudget = LinkBudget()
    n_elements: int = 16
    spacing_wl: float = 0.5
    codebook_size: int = 16
    rrm_params: RrmParams = RrmParams()
    rrm_ms_per_eval: float = 0.05
    latency_model: fid.LatencyModel = fid.LatencyModel()
    t_position_ms: float = 100.0
    t_trajpred_ms: float = 10.0
    t_overhead_ms: float = 20.0
    t_guard_ms: float = 50.0
    kappa: float = 1.0
    gt_cfg: ch.FidelityConfig = fid.DEFAULT_GROUND_TRUTH
    candidates: tuple[ch.FidelityConfig, ...] = ()
    fixed_cfg: ch.FidelityConfig | None = None
    threads: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n_ttis < 1:
            raise ConfigError("n_ttis must be >= 1")
        if self.tti_s <= 0 or self.horizon_s <= 0:
            raise ConfigError("tti_s and horizon_s must be positive")
        if self.fixed_cfg is None and not self.candidates \
                and self.mode not in ("oracle", "stochastic_baseline"):
            raise ConfigError("need either fixed_cfg or a candidate list")


@dataclass(frozen=True)
class TtiRecord:
    index: int
    t_decision: float
    t_score: float
    cfg_label: str
    calibrated: bool
    fidelity_fallback: bool
    budget_ms: float
    t_position_ms: float
    t_predict_ms: float
    t_scene_ms: float
    t_trace_ms: float
    t_rrm_ms: float
    total_latency_ms: float
    deadline_met: bool
    effective_tx_fraction: float
    beams: tuple[int, ...]
    pf_planned: float
    n_served: int
    sum_rate_bps: float
    outage: float
    rmse_db: float
    fde_m: float


@dataclass
class EpisodeResult:
    config: EpisodeConfig
    records: list[TtiRecord]
    decisions: list[tuple[float, fid.FidelityDecision]]
    aggregates: dict = field(default_factory=dict)

    def aggregate(self) -> dict:
        recs = self.records
        if not recs:
            return {"n_ttis": 0}
        self.aggregates = {
            "n_ttis": len(recs),
            "mean_sum_rate_bps": float(np.mean([r.sum_rate_bps for r in recs])),
            "mean_outage": float(np.mean([r.outage for r in recs])),
            "mean_rmse_db": float(np.mean([r.rmse_db for r in recs])),
            "mean_fde_m": float(np.mean([r.fde_m for r in recs])),
            "deadline_violations": int(sum(not r.deadline_met for r in recs)),
            "deadline_violation_rate": float(np.mean([not r.deadline_met for r in recs])),
            "mean_effective_tx_fraction": float(np.mean([r.effective_tx_fraction
                                                         for r in recs])),
            "fallback_ttis": int(sum(r.fidelity_fallback for r in recs)),
        }
        return self.aggregates


def rrm_latency_bound_ms(params: RrmParams, n_rsus: int, n_beams: int,
                         ms_per_eval: float) -> float:
    """Worst-case virtual optimizer latency, used as the cloud benchmark."""
    bound = params.n_restarts * params.max_passes * n_rsus * n_beams + params.n_restarts
    return ms_per_eval * bound


def effective_tx_fraction(total_ms: float, tti_ms: float) -> float:
    """1 when the pipeline met the TTI, else the usable remainder of the slot."""
    if total_ms <= tti_ms:
        return 1.0
    overrun = total_ms - tti_ms
    return float(np.clip((tti_ms - overrun) / tti_ms, 0.0, 1.0))


def score_realized(gains_real: np.ndarray, beams: np.ndarray,
                   serving: np.ndarray, budget: LinkBudget,
                   tx_fraction: float) -> tuple[rrm.NetworkMetrics, np.ndarray]:
    """Apply decided beams and association to ground-truth channels.

    Users keep their planned serving RSU; realized SINR decides outage and
    rate.  The realized sum rate scales by the effective transmission
    fraction.
    """
    n_u = gains_real.shape[0]
    sinr = sinr_linear(gains_real, beams, budget.p_tx_w, budget.noise_w)
    realized = np.full(n_u, -np.inf)
    for u in range(n_u):
        if serving[u] >= 0:
            val = sinr[u, serving[u]]
            realized[u] = 10.0 * np.log10(val) if val > 0 else -np.inf
    res = EvalResult(score=EvalScore(0.0, 0.0), serving=serving.copy(),
                     sinr_db=realized)
    metrics = network_metrics(res, budget)
    return rrm.NetworkMetrics(sum_rate_bps=metrics.sum_rate_bps * tx_fraction,
                              outage_prob=metrics.outage_prob,
                              n_served=metrics.n_served), realized


class _Episode:
    """Internal per-run state: noise tables, seeds, channel helpers."""

    def __init__(self, cfg: EpisodeConfig):
        self.cfg = cfg
        self.trace = cfg.trace
        self.ids = list(self.trace.ids)
        self.kinds = mobility.kind_map(self.trace)
        self.dt = self.trace.dt
        self.codebook = dft_codebook(cfg.n_elements, cfg.codebook_size)
        rng = np.random.default_rng(np.random.PCG64(sub_seed(cfg.seed, "rtk")))
        self.noise = rng.normal(0.0, cfg.position_noise_m,
                                (len(self.trace.times), len(self.ids), 2))
        self.t0 = float(self.trace.times[0])
        need_history = (cfg.history_steps - 1) * self.dt + cfg.t_position_ms / 1000.0
        start = max(need_history, cfg.staleness_s)
        self.t_start = self.t0 + np.ceil(start / self.dt) * self.dt
        t_last_score = self.t_start + (cfg.n_ttis - 1) * cfg.tti_s + cfg.horizon_s
        if t_last_score > float(self.trace.times[-1]) + 1e-9:
            raise ConfigError(
                f"trace too short: needs {t_last_score:.1f} s, has "
                f"{float(self.trace.times[-1]):.1f} s")
        self.ttis_per_update = max(1, int(round(cfg.t_update_s / cfg.tti_s)))
        self.rrm_cloud_ms = rrm_latency_bound_ms(
            cfg.rrm_params, max(len(cfg.static_scene.rsus), 1), cfg.codebook_size,
            cfg.rrm_ms_per_eval)
        self.budget_spec = fid.BudgetSpec(
            t_horizon_ms=cfg.tti_s * 1000.0,
            t_position_ms=cfg.t_position_ms,
            t_trajpred_ms=cfg.t_trajpred_ms,
            t_rrm_cloud_ms=self.rrm_cloud_ms,
            t_overhead_ms=cfg.t_overhead_ms,
            t_guard_ms=cfg.t_guard_ms,
            kappa=cfg.kappa)

    def step_index(self, t: float) -> int:
        return int(round((t - self.t0) / self.dt))

    def clean_poses(self, t: float) -> dict:
        return mobility.sample_poses(self.trace, t)

    def noisy_poses(self, t: float) -> dict:
        idx = self.step_index(t)
        poses = mobility.sample_poses(self.trace, self.trace.times[idx])
        out = {}
        for k, vid in enumerate(self.ids):
            p = poses[vid]
            out[vid] = type(p)(position=p.position + self.noise[idx, k],
                               heading=p.heading, speed=p.speed)
        return out

    def history(self, vid: str, t_end: float) -> predictor.HistoryWindow:
        k_steps = self.cfg.history_steps
        end = self.step_index(t_end)
        lo = end - (k_steps - 1)
        col = self.ids.index(vid)
        pos = np.column_stack([self.trace.x[lo:end + 1, col],
                               self.trace.y[lo:end + 1, col]])
        pos = pos + self.noise[lo:end + 1, col]
        return predictor.HistoryWindow(
            times=self.trace.times[lo:end + 1].copy(),
            positions=pos,
            headings=self.trace.heading[lo:end + 1, col].copy(),
            speeds=self.trace.speed[lo:end + 1, col].copy())

    def scene_at(self, poses: dict, fidelity: int) -> Scene:
        return update_poses(self.cfg.static_scene, poses, fidelity=fidelity,
                            kinds=self.kinds)

    def channels(self, scene: Scene, cfg: ch.FidelityConfig, seed_tag: tuple):
        """Channel vectors (u, b, n) and per-link path gains (u, b) in dB."""
        cfgc = self.cfg
        ids = scene.vehicle_ids()
        n_u, n_b = len(ids), len(scene.rsus)
        vecs = np.zeros((n_u, n_b, cfgc.n_elements), dtype=complex)
        gains_db = np.full((n_u, n_b), ch.GAIN_FLOOR_DB)
        if n_u == 0 or n_b == 0:
            return vecs, gains_db
        rx = np.array([antenna_position(scene.vehicles[v]) for v in ids])
        owners = np.arange(n_u)

        def one_tx(b):
            rsu = scene.rsus[b]
            per_rx = ch.trace_paths_batch(
                scene, rsu, rx, cfg, seed=sub_seed(cfgc.seed, *seed_tag, b),
                carrier_hz=cfgc.link_budget.carrier_hz, exclude_owners=owners)
            spec = ch.UlaSpec(n_elements=cfgc.n_elements, spacing_wl=cfgc.spacing_wl,
                              boresight=rsu.boresight, downtilt=rsu.downtilt)
            return b, [ch.channel_vector(p, spec, cfgc.link_budget.carrier_hz)
                       for p in per_rx]

        if cfgc.threads > 1 and n_b > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=cfgc.threads) as pool:
                results = list(pool.map(one_tx, range(n_b)))
        else:
            results = [one_tx(b) for b in range(n_b)]
        for b, vec_list in results:
            for k in range(n_u):
                vecs[k, b] = vec_list[k]
                gains_db[k, b] = ch.path_gain_db(vec_list[k])
        return vecs, gains_db

    def stochastic_channels(self, scene: Scene, tti: int):
        cfgc = self.cfg
        ids = scene.vehicle_ids()
        n_u, n_b = len(ids), len(scene.rsus)
        vecs = np.zeros((n_u, n_b, cfgc.n_elements), dtype=complex)
        gains_db = np.full((n_u, n_b), ch.GAIN_FLOOR_DB)
        for k, vid in enumerate(ids):
            rx = antenna_position(scene.vehicles[vid])
            for b, rsu in enumerate(scene.rsus):
                dist = float(np.linalg.norm(rsu.position - rx))
                los = ch.los_clear(scene, rsu.position, rx, vehicle_fidelity=0,
                                   exclude_owner=k)
                h = ch.stochastic_baseline_channel(
                    dist, los, cfgc.n_elements,
                    seed=sub_seed(cfgc.seed, "stoch", tti, vid, b),
                    carrier_hz=cfgc.link_budget.carrier_hz)
                vecs[k, b] = h
                gains_db[k, b] = ch.path_gain_db(h)
        return vecs, gains_db


def run_episode(cfg: EpisodeConfig) -> EpisodeResult:
    """Run one episode and return per-TTI records plus aggregates."""
    ep = _Episode(cfg)
    records: list[TtiRecord] = []
    decisions: list[tuple[float, fid.FidelityDecision]] = []
    n_u = len(ep.ids)
    ula_ref = ch.UlaSpec(n_elements=cfg.n_elements, spacing_wl=cfg.spacing_wl)
    active_cfg = cfg.fixed_cfg or (cfg.candidates[0] if cfg.candidates else cfg.gt_cfg)
    active_budget = np.nan
    active_fallback = False

    for i in range(cfg.n_ttis):
        t_dec = ep.t_start + i * cfg.tti_s
        is_oracle = cfg.mode == "oracle"
        is_predictive = cfg.mode == "predictive"
        t_score = t_dec + cfg.horizon_s if (is_predictive or is_oracle) else t_dec

        calibrated = False
        if cfg.mode in ("predictive", "reactive") and cfg.fixed_cfg is None:
            if i % ep.ttis_per_update == 0:
                t_ctx = t_dec - (cfg.t_position_ms / 1000.0 if is_predictive
                                 else cfg.staleness_s)
                ctx_scene = ep.scene_at(ep.noisy_poses(t_ctx), 3)
                if n_u and cfg.static_scene.rsus:
                    decision = fid.select_fidelity(
                        ctx_scene, list(cfg.candidates), cfg.gt_cfg,
                        ep.budget_spec, ula_ref,
                        seed=sub_seed(cfg.seed, "calib", i),
                        model=cfg.latency_model,
                        carrier_hz=cfg.link_budget.carrier_hz,
                        allow_fallback=True)
                    active_cfg = decision.cfg
                    active_budget = decision.budget_ms
                    active_fallback = decision.fallback
                    decisions.append((t_dec, decision))
                    calibrated = True

        # --- decision-side poses and scene
        fde_m = 0.0
        if is_predictive:
            t_meas = t_dec - cfg.t_position_ms / 1000.0
            horizon = (t_score - t_meas)
            pred_poses = {}
            for vid in ep.ids:
                window = ep.history(vid, t_meas)
                pred_poses[vid] = predictor.predict(
                    window, horizon, method=cfg.predictor_method,
                    **({"q_var": cfg.kf_q_var, "r_var": cfg.kf_r,
                        "p0_vel": cfg.kf_p0_v}
                       if cfg.predictor_method == "kf" else {}))
            decision_poses = pred_poses
        elif cfg.mode in ("reactive", "stochastic_baseline"):
            decision_poses = ep.noisy_poses(t_dec - cfg.staleness_s)
        else:  # oracle
            decision_poses = ep.clean_poses(t_score)

        use_cfg = cfg.gt_cfg if is_oracle else active_cfg
        scene_dec = ep.scene_at(decision_poses, use_cfg.vehicle_fidelity)

        # --- planning channels and RRM
        if cfg.mode == "stochastic_baseline":
            vec_plan, gains_plan_db = ep.stochastic_channels(scene_dec, i)
            t_trace_ms = STOCHASTIC_TRACE_MS
        else:
            tag = ("real", i) if is_oracle else ("plan", i)
            vec_plan, gains_plan_db = ep.channels(scene_dec, use_cfg, tag)
            t_trace_ms = fid.estimate_latency(
                use_cfg, fid.SceneStats.of(scene_dec, use_cfg.vehicle_fidelity),
                cfg.latency_model, cfg.kappa)

        if n_u and cfg.static_scene.rsus:
            tensor_plan = gain_tensor(vec_plan, ep.codebook)
            solve = rrm.icd_solve(tensor_plan, cfg.link_budget, cfg.rrm_params,
                                  seed=sub_seed(cfg.seed, "rrm", i))
            beams = solve.beams
            serving = solve.result.serving
            pf_planned = solve.result.score.pf_score
            t_rrm_ms = cfg.rrm_ms_per_eval * solve.eval_count
        else:
            beams = np.zeros(0, dtype=np.int64)
            serving = np.zeros(0, dtype=np.int64)
            pf_planned = 0.0
            t_rrm_ms = 0.0

        total_ms = (cfg.t_position_ms + cfg.t_trajpred_ms + cfg.t_overhead_ms
                    + t_trace_ms + t_rrm_ms)
        if is_oracle:
            deadline_met, tx_fraction = True, 1.0
        else:
            deadline_met = total_ms <= cfg.tti_s * 1000.0
            tx_fraction = effective_tx_fraction(total_ms, cfg.tti_s * 1000.0)

        # --- realization against ground truth at the scoring instant
        true_poses = ep.clean_poses(t_score)
        if n_u and cfg.static_scene.rsus:
            if is_oracle:
                vec_real, gains_real_db = vec_plan, gains_plan_db
            else:
                scene_real = ep.scene_at(true_poses, cfg.gt_cfg.vehicle_fidelity)
                vec_real, gains_real_db = ep.channels(scene_real, cfg.gt_cfg,
                                                      ("real", i))
            tensor_real = gain_tensor(vec_real, ep.codebook)
            metrics, realized_db = score_realized(tensor_real, beams, serving,
                                                  cfg.link_budget, tx_fraction)
            served_db = realized_db[np.isfinite(realized_db)]
            rmse_db = float(np.sqrt(np.mean((gains_plan_db - gains_real_db) ** 2)))
        else:
            metrics = rrm.NetworkMetrics(0.0, 0.0, 0)
            rmse_db = 0.0

        if n_u:
            err = [np.linalg.norm(decision_poses[v].position
                                  - true_poses[v].position) for v in ep.ids]
            fde_m = float(np.mean(err))

        records.append(TtiRecord(
            index=i, t_decision=t_dec, t_score=t_score,
            cfg_label=use_cfg.label(), calibrated=calibrated,
            fidelity_fallback=(active_fallback and not is_oracle
                               and cfg.mode != "stochastic_baseline"),
            budget_ms=float(active_budget),
            t_position_ms=cfg.t_position_ms, t_predict_ms=cfg.t_trajpred_ms,
            t_scene_ms=cfg.t_overhead_ms, t_trace_ms=float(t_trace_ms),
            t_rrm_ms=float(t_rrm_ms), total_latency_ms=float(total_ms),
            deadline_met=bool(deadline_met),
            effective_tx_fraction=float(tx_fraction),
            beams=tuple(int(b) for b in beams), pf_planned=float(pf_planned),
            n_served=metrics.n_served, sum_rate_bps=metrics.sum_rate_bps,
            outage=metrics.outage_prob, rmse_db=rmse_db, fde_m=fde_m))

    result = EpisodeResult(config=cfg, records=records, decisions=decisions)
    result.aggregate()
    return result


def compare_modes(base: EpisodeConfig, mode_variants: list[dict],
                  seeds: list[int]) -> list[dict]:
    """Run paired episodes across seeds and mode variants.

    Each variant dict must carry a "mode" key plus any EpisodeConfig field
    overrides.  Returns one aggregate row per (variant, seed) with paired
    deltas against the first variant.
    """
    rows = []
    for seed in seeds:
        base_row = None
        for variant in mode_variants:
            overrides = dict(variant)
            mode = overrides.pop("mode")
            label = overrides.pop("label", mode)
            cfg = replace(base, mode=mode, seed=seed, **overrides)
            agg = run_episode(cfg).aggregates
            row = {"label": label, "mode": mode, "seed": seed, **agg}
            if base_row is None:
                base_row = row
                row["delta_sum_rate_bps"] = 0.0
                row["delta_outage"] = 0.0
            else:
                row["delta_sum_rate_bps"] = (row["mean_sum_rate_bps"]
                                             - base_row["mean_sum_rate_bps"])
                row["delta_outage"] = row["mean_outage"] - base_row["mean_outage"]
            rows.append(row)
    return rows


# --------------------------------------------------------------------------
# serialization

TTI_CSV_FIELDS = [f for f in TtiRecord.__dataclass_fields__]


def write_tti_csv(records: list[TtiRecord], dest) -> None:
    from pathlib import Path as _P
    own = isinstance(dest, (str, _P))
    fh = open(dest, "w", newline="") if own else dest
    try:
        fh.write(",".join(TTI_CSV_FIELDS) + "\n")
        for r in records:
            vals = []
            for name in TTI_CSV_FIELDS:
                v = getattr(r, name)
                if isinstance(v, tuple):
                    vals.append("|".join(str(x) for x in v))
                elif isinstance(v, bool):
                    vals.append(str(int(v)))
                elif isinstance(v, float):
                    vals.append(repr(v))
                else:
                    vals.append(str(v))
            fh.write(",".join(vals) + "\n")
    finally:
        if own:
            fh.close()


def write_aggregate_json(result: EpisodeResult, dest) -> None:
    from pathlib import Path as _P
    payload = {
        "mode": result.config.mode,
        "seed": result.config.seed,
        "n_ttis": result.config.n_ttis,
        "tti_ms": result.config.tti_s * 1000.0,
        "aggregates": result.aggregates,
        "calibrations": [
            {"t": t, "config": d.cfg.label(), "est_latency_ms": d.est_latency_ms,
             "rmse_db": d.rmse_db, "budget_ms": d.budget_ms, "fallback": d.fallback}
            for t, d in result.decisions
        ],
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if isinstance(dest, (str, _P)):
        with open(dest, "w") as fh:
            fh.write(text + "\n")
    else:
        dest.write(text + "\n")
