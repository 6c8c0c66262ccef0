"""Render figures and a flat summary from emitted run artifacts.

Reads the delimited outputs of the CLI subcommands (per-TTI CSV, fidelity
sweep CSV, RRM bench CSV) and renders PNG figures next to them, plus a
key,value summary.csv.  Rendering is deterministic: fixed figure geometry,
Agg backend, and stripped PNG metadata, so repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_SAVE = {"dpi": 110, "metadata": {"Software": None}}


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _col(rows: list[dict], name: str) -> list[float]:
    return [float(r[name]) for r in rows]


def render_episode_figures(out_dir: Path) -> list[Path]:
    """Figures for a `run` output directory (ttis.csv + aggregates.json)."""
    rows = _read_csv(out_dir / "ttis.csv")
    agg = json.loads((out_dir / "aggregates.json").read_text())
    tti_ms = float(agg.get("tti_ms", 1000.0))
    idx = _col(rows, "index")
    written = []

    fig, axes = plt.subplots(2, 1, figsize=(7.0, 5.0), sharex=True)
    axes[0].plot(idx, [v / 1e6 for v in _col(rows, "sum_rate_bps")],
                 marker="o", ms=3, color="tab:blue")
    axes[0].set_ylabel("sum rate (Mbit/s)")
    axes[0].grid(alpha=0.3)
    axes[1].plot(idx, _col(rows, "outage"), marker="o", ms=3, color="tab:red")
    axes[1].set_ylabel("outage fraction")
    axes[1].set_ylim(-0.02, 1.02)
    axes[1].set_xlabel("TTI")
    axes[1].grid(alpha=0.3)
    fig.suptitle(f"network performance ({agg.get('mode', '?')})")
    path = out_dir / "fig_rates.png"
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    written.append(path)

    stages = [("t_position_ms", "position"), ("t_predict_ms", "predict"),
              ("t_scene_ms", "scene"), ("t_trace_ms", "trace"),
              ("t_rrm_ms", "rrm")]
    fig, ax = plt.subplots(figsize=(7.0, 3.6))
    bottom = [0.0] * len(rows)
    for field_name, label in stages:
        vals = _col(rows, field_name)
        ax.bar(idx, vals, bottom=bottom, label=label, width=0.8)
        bottom = [b + v for b, v in zip(bottom, vals)]
    ax.axhline(tti_ms, color="black", ls="--", lw=1.2, label="TTI deadline")
    ax.set_xlabel("TTI")
    ax.set_ylabel("latency (ms)")
    ax.legend(fontsize=8, ncol=3)
    path = out_dir / "fig_latency.png"
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    written.append(path)

    fig, axes = plt.subplots(2, 1, figsize=(7.0, 5.0), sharex=True)
    axes[0].plot(idx, _col(rows, "rmse_db"), marker="o", ms=3, color="tab:green")
    axes[0].set_ylabel("path-gain RMSE (dB)")
    axes[0].grid(alpha=0.3)
    axes[1].plot(idx, _col(rows, "fde_m"), marker="o", ms=3, color="tab:purple")
    axes[1].set_ylabel("pose error (m)")
    axes[1].set_xlabel("TTI")
    axes[1].grid(alpha=0.3)
    path = out_dir / "fig_accuracy.png"
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    written.append(path)
    return written


def render_sweep_figure(out_dir: Path) -> list[Path]:
    """RMSE versus estimated latency frontier for a fidelity sweep."""
    rows = _read_csv(out_dir / "sweep.csv")
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    feas = [r for r in rows if r["feasible"] == "1"]
    infeas = [r for r in rows if r["feasible"] != "1"]
    if feas:
        ax.scatter(_col(feas, "est_latency_ms"), _col(feas, "rmse_db"),
                   c="tab:blue", s=28, label="feasible")
    if infeas:
        ax.scatter(_col(infeas, "est_latency_ms"), _col(infeas, "rmse_db"),
                   c="tab:gray", s=28, marker="x", label="over budget")
    chosen = [r for r in rows if r.get("chosen") == "1"]
    if chosen:
        ax.scatter(_col(chosen, "est_latency_ms"), _col(chosen, "rmse_db"),
                   facecolors="none", edgecolors="tab:red", s=120, label="chosen")
    budgets = {float(r["budget_ms"]) for r in rows if r.get("budget_ms")}
    for b in sorted(budgets):
        ax.axvline(b, color="black", ls="--", lw=1.0)
    ax.set_xscale("log")
    ax.set_xlabel("estimated latency (ms)")
    ax.set_ylabel("path-gain RMSE (dB)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    path = out_dir / "fig_sweep.png"
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return [path]


def render_bench_figure(out_dir: Path) -> list[Path]:
    """Optimality gap and cost scaling for an RRM bench run."""
    rows = [r for r in _read_csv(out_dir / "bench.csv") if r["status"] == "ok"]
    fig, axes = plt.subplots(1, 2, figsize=(8.5, 3.8))
    if rows:
        axes[0].scatter(_col(rows, "exhaustive_pf"), _col(rows, "icd_pf"),
                        s=20, c="tab:blue")
        lo = min(_col(rows, "exhaustive_pf") + _col(rows, "icd_pf"))
        hi = max(_col(rows, "exhaustive_pf") + _col(rows, "icd_pf"))
        pad = 0.05 * (hi - lo) if hi > lo else 1.0
        axes[0].plot([lo - pad, hi + pad], [lo - pad, hi + pad],
                     color="black", lw=1.0, ls="--")
        axes[1].scatter(_col(rows, "space_size"), _col(rows, "icd_evals"),
                        s=20, c="tab:blue", label="icd")
        axes[1].scatter(_col(rows, "space_size"), _col(rows, "exhaustive_evals"),
                        s=20, c="tab:orange", label="exhaustive")
        axes[1].set_xscale("log")
        axes[1].set_yscale("log")
        axes[1].legend(fontsize=8)
    axes[0].set_xlabel("exhaustive objective")
    axes[0].set_ylabel("icd objective")
    axes[0].grid(alpha=0.3)
    axes[1].set_xlabel("search-space size")
    axes[1].set_ylabel("evaluations")
    axes[1].grid(alpha=0.3, which="both")
    fig.tight_layout()
    path = out_dir / "fig_bench.png"
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return [path]


def write_summary(out_dir: Path) -> Path:
    """Flatten whatever aggregate artifacts exist into key,value summary.csv."""
    items: list[tuple[str, str]] = []
    agg_path = out_dir / "aggregates.json"
    if agg_path.exists():
        payload = json.loads(agg_path.read_text())
        for key in ("mode", "seed", "n_ttis", "tti_ms"):
            if key in payload:
                items.append((key, str(payload[key])))
        for key, val in sorted(payload.get("aggregates", {}).items()):
            items.append((key, repr(val) if isinstance(val, float) else str(val)))
    sweep_path = out_dir / "sweep.csv"
    if sweep_path.exists():
        rows = _read_csv(sweep_path)
        items.append(("sweep_candidates", str(len(rows))))
        chosen = [r for r in rows if r.get("chosen") == "1"]
        if chosen:
            items.append(("sweep_chosen", chosen[0]["config"]))
    bench_path = out_dir / "bench.csv"
    if bench_path.exists():
        rows = _read_csv(bench_path)
        ok = [r for r in rows if r["status"] == "ok"]
        items.append(("bench_instances", str(len(rows))))
        if ok:
            gaps = [float(r["pf_gap"]) for r in ok]
            items.append(("bench_mean_gap", repr(sum(gaps) / len(gaps))))
            items.append(("bench_zero_gap_fraction",
                          repr(sum(g == 0.0 for g in gaps) / len(gaps))))
    dest = out_dir / "summary.csv"
    with open(dest, "w", newline="") as fh:
        fh.write("key,value\n")
        for key, val in items:
            fh.write(f"{key},{val}\n")
    return dest


def render_all(out_dir) -> list[Path]:
    """Render every figure supported by the artifacts present in out_dir."""
    out_dir = Path(out_dir)
    written: list[Path] = []
    if (out_dir / "ttis.csv").exists() and (out_dir / "aggregates.json").exists():
        written += render_episode_figures(out_dir)
    if (out_dir / "sweep.csv").exists():
        written += render_sweep_figure(out_dir)
    if (out_dir / "bench.csv").exists():
        written += render_bench_figure(out_dir)
    written.append(write_summary(out_dir))
    return written
