"""Command-line front end.

Subcommands: generate-traffic, run, sweep-fidelity, bench-rrm, report.
Every command writes a manifest.json recording the resolved configuration,
seed, tool version, sha256 digests of input files, and the output file
names, so a run can be reproduced from its artifacts alone.

Exit codes: 0 success, 1 usage error, 2 configuration or input-file error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, config, fidelity, mobility, orchestrator, rrm
from .channel import UlaSpec
from .errors import ConfigError, MalformedMap, MalformedTrace, VtwinError
from .phy import LinkBudget
from .scene import update_poses

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

BENCH_CSV_HEADER = ("n_rsus,n_beams,n_users,seed,space_size,status,icd_pf,"
                    "icd_worst_db,exhaustive_pf,exhaustive_worst_db,pf_gap,"
                    "icd_evals,exhaustive_evals")
SWEEP_CSV_HEADER = ("config,n_rays,max_depth,n_paths,diffuse,diffraction,"
                    "vehicle_fidelity,est_latency_ms,rmse_db,feasible,chosen,"
                    "budget_ms")


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; the contract here says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


class UsageError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, seed: int, resolved,
                    inputs: list[Path], outputs: list[str]) -> None:
    if isinstance(resolved, dict) and "episode" in resolved:
        # worker caps never change results, so they are not run identity
        resolved = {**resolved,
                    "episode": {k: v for k, v in resolved["episode"].items()
                                if k != "threads"}}
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": resolved,
        "input_digests": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": sorted(outputs),
    }
    text = json.dumps(manifest, indent=2, sort_keys=True)
    (out_dir / "manifest.json").write_text(text + "\n")


def _prepare_out(args, cfg=None) -> Path:
    if getattr(args, "out", None):
        out_dir = Path(args.out)
    elif cfg is not None:
        out_dir = config.resolve_output_dir(cfg)
    else:
        out_dir = config.resolve_output_dir(config.load_config())
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _load(args) -> dict:
    return config.load_config(args.config, args.override)


def _config_inputs(args, cfg) -> list[Path]:
    inputs = []
    if args.config:
        inputs.append(Path(args.config))
    if cfg["map"]["file"]:
        inputs.append(Path(cfg["map"]["file"]))
    if cfg["traffic"]["trace_csv"]:
        inputs.append(Path(cfg["traffic"]["trace_csv"]))
    return inputs


# --------------------------------------------------------------------------
# subcommands


def cmd_generate_traffic(args) -> int:
    if args.vehicles < 0:
        raise UsageError("--vehicles must be >= 0")
    if args.duration < 0:
        raise UsageError("--duration must be >= 0")
    mix = None
    if args.mix:
        mix = {}
        for part in args.mix.split(","):
            kind, _, share = part.partition("=")
            if not share:
                raise UsageError(f"--mix entries look like kind=share: {part!r}")
            mix[kind.strip()] = float(share)
    net = mobility.generate_network(args.blocks[0], args.blocks[1],
                                    args.block_size, speed_limit=args.speed_limit)
    trace = mobility.generate_traffic(net, args.vehicles, mix=mix,
                                      seed=args.seed, duration=args.duration,
                                      dt=args.dt)
    out_dir = _prepare_out(args)
    mobility.export_trace(trace, out_dir / "trace.csv")
    resolved = {"blocks": list(args.blocks), "block_size_m": args.block_size,
                "n_vehicles": args.vehicles, "duration_s": args.duration,
                "dt_s": args.dt, "speed_limit_mps": args.speed_limit,
                "mix": mix or dict(mobility.DEFAULT_MIX)}
    _write_manifest(out_dir, "generate-traffic", args.seed, resolved, [],
                    ["trace.csv"])
    print(f"wrote {out_dir / 'trace.csv'} "
          f"({args.vehicles} vehicles, {args.duration:g} s)")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    if args.threads:
        cfg["episode"]["threads"] = args.threads
    episode_cfg = config.build_episode(cfg)
    result = orchestrator.run_episode(episode_cfg)
    out_dir = _prepare_out(args, cfg)
    orchestrator.write_tti_csv(result.records, out_dir / "ttis.csv")
    orchestrator.write_aggregate_json(result, out_dir / "aggregates.json")
    outputs = ["ttis.csv", "aggregates.json"]
    if result.decisions:
        fidelity.write_decision_log(result.decisions, out_dir / "decisions.csv")
        outputs.append("decisions.csv")
    _write_manifest(out_dir, "run", cfg["seed"], cfg,
                    _config_inputs(args, cfg), outputs)
    agg = result.aggregates
    print(f"mode={episode_cfg.mode} ttis={agg['n_ttis']} "
          f"sum_rate={agg['mean_sum_rate_bps'] / 1e6:.2f}Mbps "
          f"outage={agg['mean_outage']:.3f} "
          f"deadline_violations={agg['deadline_violations']}")
    print(f"artifacts in {out_dir}")
    return EXIT_OK


def cmd_sweep_fidelity(args) -> int:
    cfg = _load(args)
    _, candidates, gt = config.resolve_fidelity(cfg)
    if not candidates:
        raise UsageError("candidate grid is empty; configure fidelity.candidates")
    episode_cfg = config.build_episode(cfg)
    ep = orchestrator._Episode(episode_cfg)
    poses = ep.noisy_poses(ep.t_start - episode_cfg.t_position_ms / 1000.0)
    scene = ep.scene_at(poses, 3)
    ula = UlaSpec(n_elements=episode_cfg.n_elements,
                  spacing_wl=episode_cfg.spacing_wl)
    decision = fidelity.select_fidelity(
        scene, list(candidates), gt, ep.budget_spec, ula,
        seed=orchestrator.sub_seed(cfg["seed"], "sweep"),
        model=episode_cfg.latency_model,
        carrier_hz=episode_cfg.link_budget.carrier_hz, allow_fallback=True)
    out_dir = _prepare_out(args, cfg)
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        fh.write(SWEEP_CSV_HEADER + "\n")
        for ev in decision.evaluations:
            c = ev.cfg
            rmse = repr(ev.rmse_db) if ev.rmse_db is not None else ""
            fh.write(f"{c.label()},{c.n_rays},{c.max_depth},{c.n_paths},"
                     f"{int(c.diffuse)},{int(c.diffraction)},"
                     f"{c.vehicle_fidelity},{repr(ev.est_latency_ms)},{rmse},"
                     f"{int(ev.feasible)},{int(ev.chosen)},"
                     f"{repr(decision.budget_ms)}\n")
    _write_manifest(out_dir, "sweep-fidelity", cfg["seed"], cfg,
                    _config_inputs(args, cfg), ["sweep.csv"])
    print(f"chose {decision.cfg.label()} "
          f"(est {decision.est_latency_ms:.1f} ms, rmse {decision.rmse_db:.2f} dB,"
          f" budget {decision.budget_ms:.1f} ms, fallback={decision.fallback})")
    print(f"artifacts in {out_dir}")
    return EXIT_OK


def cmd_bench_rrm(args) -> int:
    if not args.rsus or any(b < 1 for b in args.rsus):
        raise UsageError("--rsus needs positive RSU counts")
    if args.beams < 1 or args.users < 1 or args.instances < 1:
        raise UsageError("--beams, --users, --instances must be >= 1")
    budget = LinkBudget()
    params = rrm.RrmParams(n_restarts=args.restarts, max_passes=args.passes)
    out_dir = _prepare_out(args)
    rows = []
    for n_rsus in args.rsus:
        for inst in range(args.instances):
            seed = orchestrator.sub_seed(args.seed, "bench", n_rsus, inst)
            rng = np.random.default_rng(np.random.PCG64(seed))
            gains_db = rng.uniform(-120.0, -70.0, (args.users, n_rsus, args.beams))
            gains = 10.0 ** (gains_db / 10.0)
            space = args.beams ** n_rsus
            icd = rrm.icd_solve(gains, budget, params, seed=seed)
            try:
                exh = rrm.exhaustive_solve(gains, budget, params)
                gap = exh.result.score.pf_score - icd.result.score.pf_score
                rows.append((n_rsus, args.beams, args.users, seed, space, "ok",
                             icd.result.score.pf_score,
                             icd.result.score.worst_sinr_db,
                             exh.result.score.pf_score,
                             exh.result.score.worst_sinr_db, gap,
                             icd.eval_count, exh.eval_count))
            except rrm.SearchSpaceTooLarge:
                rows.append((n_rsus, args.beams, args.users, seed, space,
                             "too_large", icd.result.score.pf_score,
                             icd.result.score.worst_sinr_db, "", "", "",
                             icd.eval_count, ""))
    with open(out_dir / "bench.csv", "w", newline="") as fh:
        fh.write(BENCH_CSV_HEADER + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")
    resolved = {"rsus": list(args.rsus), "beams": args.beams,
                "users": args.users, "instances": args.instances,
                "restarts": args.restarts, "passes": args.passes}
    _write_manifest(out_dir, "bench-rrm", args.seed, resolved, [], ["bench.csv"])
    ok = [r for r in rows if r[5] == "ok"]
    zero = sum(1 for r in ok if r[10] == 0.0)
    print(f"{len(rows)} instances, {len(ok)} with exhaustive baseline, "
          f"{zero} matched the global optimum")
    print(f"artifacts in {out_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    from . import report
    in_dir = Path(args.input) if args.input else _prepare_out(args)
    if not in_dir.exists():
        raise UsageError(f"no such artifact directory: {in_dir}")
    written = report.render_all(in_dir)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="vtwin",
                     description="Deterministic network digital-twin simulator "
                                 "for multi-RSU vehicular downlinks.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", "-c", default=None,
                       help="run config YAML (defaults apply when omitted)")
        p.add_argument("--override", "-o", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="dotted config override, e.g. episode.n_ttis=5")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("generate-traffic", help="simulate vehicles, write a trace CSV")
    p.add_argument("--blocks", nargs=2, type=int, default=[2, 2],
                   metavar=("ROWS", "COLS"))
    p.add_argument("--block-size", type=float, default=100.0)
    p.add_argument("--vehicles", type=int, default=12)
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--speed-limit", type=float, default=14.0)
    p.add_argument("--mix", default=None,
                   help="kind shares, e.g. car=0.8,bus=0.1,box_truck=0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_generate_traffic)

    p = sub.add_parser("run", help="run one closed-loop episode")
    add_config_args(p)
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap for per-RSU tracing (results identical)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-fidelity",
                       help="evaluate the candidate grid on one scene snapshot")
    add_config_args(p)
    p.set_defaults(func=cmd_sweep_fidelity)

    p = sub.add_parser("bench-rrm",
                       help="ICD vs exhaustive search on random gain tensors")
    p.add_argument("--rsus", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--beams", type=int, default=4)
    p.add_argument("--users", type=int, default=6)
    p.add_argument("--instances", type=int, default=10)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--passes", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench_rrm)

    p = sub.add_parser("report", help="render figures and summary for artifacts")
    p.add_argument("--input", default=None,
                   help="artifact directory (defaults to the output directory)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"vtwin: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, MalformedMap, MalformedTrace) as exc:
        print(f"vtwin: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VtwinError as exc:
        print(f"vtwin: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # pragma: no cover - last-resort diagnostics
        print(f"vtwin: internal error: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
