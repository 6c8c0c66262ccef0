"""vtwin: deterministic digital-twin simulator for vehicular mmWave-style
downlinks with adaptive ray-tracing fidelity and proactive beam management."""

__version__ = "0.1.0"

from .channel import (
    FidelityConfig,
    PathComponent,
    UlaSpec,
    channel_vector,
    link_seed,
    path_gain_db,
    synthesize_cir,
    trace_paths,
    trace_paths_batch,
)
from .errors import (
    ConfigError,
    MalformedMap,
    MalformedTrace,
    NoFeasibleConfig,
    NumericalFailure,
    SearchSpaceTooLarge,
    UnsupportedScene,
    VtwinError,
)
from .fidelity import (
    BudgetSpec,
    FidelityDecision,
    LatencyModel,
    compute_budget,
    estimate_latency,
    rmse_path_gain,
    select_fidelity,
)
from .mobility import (
    Trace,
    export_trace,
    generate_network,
    generate_traffic,
    ingest_trace,
    sample_poses,
)
from .orchestrator import EpisodeConfig, EpisodeResult, TtiRecord, compare_modes, run_episode
from .phy import LinkBudget, beam_gain, dft_codebook, gain_tensor, sinr_db, sinr_linear
from .predictor import HistoryWindow, fde, predict
from .rrm import RrmParams, evaluate_config, exhaustive_solve, icd_solve, network_metrics
from .scene import Pose, Scene, build_scene, surface_set, update_poses

__all__ = [
    "__version__",
    "BudgetSpec",
    "ConfigError",
    "EpisodeConfig",
    "EpisodeResult",
    "FidelityConfig",
    "FidelityDecision",
    "HistoryWindow",
    "LatencyModel",
    "LinkBudget",
    "MalformedMap",
    "MalformedTrace",
    "NoFeasibleConfig",
    "NumericalFailure",
    "PathComponent",
    "Pose",
    "RrmParams",
    "Scene",
    "SearchSpaceTooLarge",
    "Trace",
    "TtiRecord",
    "UlaSpec",
    "UnsupportedScene",
    "VtwinError",
    "beam_gain",
    "build_scene",
    "channel_vector",
    "compare_modes",
    "compute_budget",
    "dft_codebook",
    "estimate_latency",
    "evaluate_config",
    "exhaustive_solve",
    "export_trace",
    "fde",
    "gain_tensor",
    "generate_network",
    "generate_traffic",
    "icd_solve",
    "ingest_trace",
    "link_seed",
    "network_metrics",
    "path_gain_db",
    "predict",
    "rmse_path_gain",
    "run_episode",
    "sample_poses",
    "select_fidelity",
    "sinr_db",
    "sinr_linear",
    "surface_set",
    "synthesize_cir",
    "trace_paths",
    "trace_paths_batch",
    "update_poses",
]
