"""Run configuration: YAML schema, defaults, overrides, episode assembly.

A run config is a nested mapping with the sections below.  Every key has a
default, so an empty file is a valid config.  `load_config` merges file
values and dotted command-line overrides over the defaults and rejects
unknown keys; `build_episode` turns the resolved mapping into the live
objects (scene, trace, EpisodeConfig).

Sections and keys:

* seed: master RNG seed (int).
* mode: predictive | reactive | oracle | stochastic_baseline.
* episode: n_ttis, tti_s, horizon_s, t_update_s, staleness_s,
  position_noise_m, history_steps, predictor (cv|kf), threads.
* map: file (path to a map YAML; overrides the synthetic grid) or the grid
  knobs blocks [rows, cols], block_size_m, street_half_m, n_rsus,
  rsu_height_m, downtilt_deg.
* traffic: trace_csv (ingest instead of simulating), n_vehicles, duration_s
  (null = long enough for the episode), dt_s, speed_limit_mps, mix.
* phy: tx_power_dbm, bandwidth_hz, noise_figure_db, sinr_min_db, carrier_hz,
  n_elements, spacing_wl, codebook_size.
* rrm: max_served_per_rsu, outage_penalty, n_restarts, max_passes,
  ms_per_eval.
* fidelity: preset (desk|reference), fixed (one config mapping locks
  adaptation off), candidates (list of config mappings), ground_truth
  (config mapping).  A config mapping has n_rays, max_depth, and optional
  n_paths, diffuse, diffraction, vehicle_fidelity.
* latency: cost-model coefficients plus the fixed pipeline stage times
  (t_position_ms, t_trajpred_ms, t_overhead_ms, t_guard_ms, kappa).
* output: dir (default $VTWIN_OUTPUT_DIR, then ./vtwin-out).
"""

from __future__ import annotations

import copy
import os
from pathlib import Path

import numpy as np
import yaml

from . import fidelity as fid
from . import mobility
from .channel import FidelityConfig
from .errors import ConfigError
from .orchestrator import MODES, EpisodeConfig
from .phy import LinkBudget
from .rrm import RrmParams
from .scene import build_scene

OUTPUT_DIR_ENV = "VTWIN_OUTPUT_DIR"

DESK_CANDIDATES = (
    FidelityConfig(n_rays=500, max_depth=2, vehicle_fidelity=0),
    FidelityConfig(n_rays=1500, max_depth=4, vehicle_fidelity=1),
    FidelityConfig(n_rays=5000, max_depth=6, vehicle_fidelity=3),
)
DESK_GROUND_TRUTH = FidelityConfig(n_rays=10000, max_depth=6, n_paths=100000,
                                   vehicle_fidelity=3)

DEFAULTS: dict = {
    "seed": 7,
    "mode": "predictive",
    "episode": {
        "n_ttis": 20,
        "tti_s": 1.0,
        "horizon_s": 1.0,
        "t_update_s": 10.0,
        "staleness_s": 1.0,
        "position_noise_m": 0.02,
        "history_steps": 30,
        "predictor": "kf",
        "threads": 1,
    },
    "map": {
        "file": None,
        "blocks": [2, 2],
        "block_size_m": 100.0,
        "street_half_m": 8.0,
        "n_rsus": 3,
        "rsu_height_m": 10.0,
        "downtilt_deg": -6.0,
    },
    "traffic": {
        "trace_csv": None,
        "n_vehicles": 12,
        "duration_s": None,
        "dt_s": 0.1,
        "speed_limit_mps": 14.0,
        "mix": dict(mobility.DEFAULT_MIX),
    },
    "phy": {
        "tx_power_dbm": 44.0,
        "bandwidth_hz": 20e6,
        "noise_figure_db": 6.0,
        "sinr_min_db": -6.0,
        "carrier_hz": 5.875e9,
        "n_elements": 16,
        "spacing_wl": 0.5,
        "codebook_size": 16,
    },
    "rrm": {
        "max_served_per_rsu": 20,
        "outage_penalty": 1000.0,
        "n_restarts": 5,
        "max_passes": 20,
        "ms_per_eval": 0.05,
    },
    "fidelity": {
        "preset": "desk",
        "fixed": None,
        "candidates": None,
        "ground_truth": None,
    },
    "latency": {
        "ms_per_unit": 5e-5,
        "per_ray_launch": 50.0,
        "per_intersection": 1.0,
        "per_bounce": 20.0,
        "per_path": 0.2,
        "per_primitive": 50.0,
        "diffraction_surcharge": 8.0,
        "t_position_ms": 100.0,
        "t_trajpred_ms": 10.0,
        "t_overhead_ms": 20.0,
        "t_guard_ms": 50.0,
        "kappa": 1.0,
    },
    "output": {
        "dir": None,
    },
}

_SCALARS = ("seed", "mode")
_FIDELITY_KEYS = {"n_rays", "max_depth", "n_paths", "diffuse", "diffraction",
                  "vehicle_fidelity"}


def _merge(base: dict, incoming: dict, path: str = "") -> None:
    for key, value in incoming.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and key not in ("mix",) \
                and not (path == "fidelity" and key in ("fixed", "ground_truth")):
            if value is None:
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a mapping")
            _merge(base[key], value, where)
        else:
            base[key] = value


def load_config(source=None, overrides: list[str] | None = None) -> dict:
    """Resolve a config from a YAML path, a mapping, or nothing (defaults).

    `overrides` are dotted assignments like `episode.n_ttis=5`; values parse
    as YAML so booleans, numbers, and lists work.  Raises ConfigError on
    unknown keys, bad structure, or invalid values.
    """
    resolved = copy.deepcopy(DEFAULTS)
    # fidelity.fixed/ground_truth default to None but accept mappings
    if source is not None:
        if isinstance(source, (str, Path)):
            try:
                text = Path(source).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {source}: {exc}") from exc
            try:
                data = yaml.safe_load(text) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"config {source} is not valid YAML: {exc}") from exc
        elif isinstance(source, dict):
            data = copy.deepcopy(source)
        else:
            raise ConfigError("config source must be a path or a mapping")
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        _merge(resolved, data)

    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        dotted, _, raw = item.partition("=")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from exc
        keys = dotted.strip().split(".")
        node = resolved
        for k in keys[:-1]:
            if not isinstance(node, dict) or k not in node:
                raise ConfigError(f"unknown config key: {dotted}")
            node = node[k]
        leaf = keys[-1]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(f"unknown config key: {dotted}")
        if isinstance(node[leaf], dict) and not isinstance(value, dict) \
                and value is not None:
            raise ConfigError(f"{dotted} must be a mapping")
        node[leaf] = value

    _validate(resolved)
    return resolved


def _validate(cfg: dict) -> None:
    if cfg["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {cfg['mode']!r}")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    ep = cfg["episode"]
    if ep["predictor"] not in ("cv", "kf"):
        raise ConfigError("episode.predictor must be 'cv' or 'kf'")
    if ep["threads"] < 1:
        raise ConfigError("episode.threads must be >= 1")
    blocks = cfg["map"]["blocks"]
    if (not isinstance(blocks, (list, tuple)) or len(blocks) != 2
            or any(int(b) < 1 for b in blocks)):
        raise ConfigError("map.blocks must be [rows, cols] with both >= 1")
    if cfg["fidelity"]["preset"] not in ("desk", "reference"):
        raise ConfigError("fidelity.preset must be 'desk' or 'reference'")
    for name in ("fixed", "ground_truth"):
        val = cfg["fidelity"][name]
        if val is not None:
            if not isinstance(val, dict) or not set(val) <= _FIDELITY_KEYS:
                raise ConfigError(
                    f"fidelity.{name} must map a subset of {sorted(_FIDELITY_KEYS)}")
    cands = cfg["fidelity"]["candidates"]
    if cands is not None:
        if not isinstance(cands, list):
            raise ConfigError("fidelity.candidates must be a list")
        for i, val in enumerate(cands):
            if not isinstance(val, dict) or not set(val) <= _FIDELITY_KEYS:
                raise ConfigError(f"fidelity.candidates[{i}] has unknown keys")


def synthetic_map(rows: int, cols: int, block_size: float,
                  street_half: float = 8.0, n_rsus: int = 3,
                  rsu_height: float = 10.0, downtilt_deg: float = -6.0) -> dict:
    """Deterministic grid map: one inset building per block, RSUs on corners."""
    if street_half * 2 >= block_size:
        raise ConfigError("street_half_m too large for block_size_m")
    buildings = []
    for j in range(rows):
        for i in range(cols):
            x0 = i * block_size + street_half
            y0 = j * block_size + street_half
            x1 = (i + 1) * block_size - street_half
            y1 = (j + 1) * block_size - street_half
            buildings.append({
                "polygon": [[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
                "height": 12.0 + 6.0 * ((i + j) % 3),
                "material": "concrete",
            })
    corners = [(i * block_size, j * block_size)
               for j in range(rows + 1) for i in range(cols + 1)]
    n_rsus = min(n_rsus, len(corners))
    picks = sorted({int(round(k)) for k in
                    np.linspace(0, len(corners) - 1, n_rsus)})
    center = (cols * block_size / 2.0, rows * block_size / 2.0)
    rsus = []
    for idx in picks:
        x, y = corners[idx]
        az = float(np.degrees(np.arctan2(center[1] - y, center[0] - x)))
        rsus.append({"x": float(x), "y": float(y), "z": float(rsu_height),
                     "downtilt_deg": float(downtilt_deg), "azimuth_deg": az})
    return {"buildings": buildings, "rsus": rsus}


def _fidelity_from(mapping: dict) -> FidelityConfig:
    try:
        return FidelityConfig(**mapping)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad fidelity config {mapping}: {exc}") from exc


def resolve_fidelity(cfg: dict):
    """(fixed, candidates, ground_truth) from the fidelity section."""
    section = cfg["fidelity"]
    fixed = _fidelity_from(section["fixed"]) if section["fixed"] else None
    if section["candidates"] is not None:
        candidates = tuple(_fidelity_from(c) for c in section["candidates"])
    elif section["preset"] == "desk":
        candidates = DESK_CANDIDATES
    else:
        candidates = tuple(fid.default_candidates())
    if section["ground_truth"] is not None:
        gt = _fidelity_from(section["ground_truth"])
    elif section["preset"] == "desk":
        gt = DESK_GROUND_TRUTH
    else:
        gt = fid.DEFAULT_GROUND_TRUTH
    return fixed, candidates, gt


def min_trace_duration(cfg: dict) -> float:
    """Shortest trace that covers the episode with one step of slack."""
    ep = cfg["episode"]
    dt = float(cfg["traffic"]["dt_s"])
    lead = max((ep["history_steps"] - 1) * dt
               + cfg["latency"]["t_position_ms"] / 1000.0,
               ep["staleness_s"])
    need = (np.ceil(lead / dt) * dt + (ep["n_ttis"] - 1) * ep["tti_s"]
            + ep["horizon_s"] + 2 * dt)
    return float(need)


def build_episode(cfg: dict) -> EpisodeConfig:
    """Instantiate scene, trace, and EpisodeConfig from a resolved config."""
    m = cfg["map"]
    if m["file"]:
        scene = build_scene(m["file"])
    else:
        rows, cols = int(m["blocks"][0]), int(m["blocks"][1])
        scene = build_scene(synthetic_map(
            rows, cols, float(m["block_size_m"]), float(m["street_half_m"]),
            int(m["n_rsus"]), float(m["rsu_height_m"]), float(m["downtilt_deg"])))

    tr = cfg["traffic"]
    if tr["trace_csv"]:
        trace = mobility.ingest_trace(tr["trace_csv"],
                                      max_speed=float(tr["speed_limit_mps"]))
    else:
        duration = tr["duration_s"]
        if duration is None:
            duration = min_trace_duration(cfg)
        rows, cols = int(m["blocks"][0]), int(m["blocks"][1])
        net = mobility.generate_network(rows, cols, float(m["block_size_m"]),
                                        speed_limit=float(tr["speed_limit_mps"]))
        trace = mobility.generate_traffic(net, int(tr["n_vehicles"]),
                                          mix=tr["mix"], seed=int(cfg["seed"]),
                                          duration=float(duration),
                                          dt=float(tr["dt_s"]))

    fixed, candidates, gt = resolve_fidelity(cfg)
    phy, rr, lat, ep = cfg["phy"], cfg["rrm"], cfg["latency"], cfg["episode"]
    budget = LinkBudget(p_tx_dbm=float(phy["tx_power_dbm"]),
                        bandwidth_hz=float(phy["bandwidth_hz"]),
                        noise_figure_db=float(phy["noise_figure_db"]),
                        gamma_min_db=float(phy["sinr_min_db"]),
                        carrier_hz=float(phy["carrier_hz"]))
    params = RrmParams(max_users_per_rsu=int(rr["max_served_per_rsu"]),
                       outage_penalty=float(rr["outage_penalty"]),
                       n_restarts=int(rr["n_restarts"]),
                       max_passes=int(rr["max_passes"]))
    model = fid.LatencyModel(
        ms_per_unit=float(lat["ms_per_unit"]),
        per_ray_launch=float(lat["per_ray_launch"]),
        per_intersection=float(lat["per_intersection"]),
        per_bounce=float(lat["per_bounce"]),
        per_path=float(lat["per_path"]),
        per_primitive=float(lat["per_primitive"]),
        diffraction_surcharge=float(lat["diffraction_surcharge"]))
    try:
        return EpisodeConfig(
            mode=cfg["mode"], seed=int(cfg["seed"]), n_ttis=int(ep["n_ttis"]),
            static_scene=scene, trace=trace, tti_s=float(ep["tti_s"]),
            horizon_s=float(ep["horizon_s"]), t_update_s=float(ep["t_update_s"]),
            staleness_s=float(ep["staleness_s"]),
            position_noise_m=float(ep["position_noise_m"]),
            history_steps=int(ep["history_steps"]),
            predictor_method=ep["predictor"], link_budget=budget,
            n_elements=int(phy["n_elements"]), spacing_wl=float(phy["spacing_wl"]),
            codebook_size=int(phy["codebook_size"]), rrm_params=params,
            rrm_ms_per_eval=float(rr["ms_per_eval"]), latency_model=model,
            t_position_ms=float(lat["t_position_ms"]),
            t_trajpred_ms=float(lat["t_trajpred_ms"]),
            t_overhead_ms=float(lat["t_overhead_ms"]),
            t_guard_ms=float(lat["t_guard_ms"]), kappa=float(lat["kappa"]),
            gt_cfg=gt, candidates=candidates, fixed_cfg=fixed,
            threads=int(ep["threads"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def resolve_output_dir(cfg: dict) -> Path:
    configured = cfg["output"]["dir"]
    if configured:
        return Path(configured)
    env = os.environ.get(OUTPUT_DIR_ENV)
    return Path(env) if env else Path("vtwin-out")
