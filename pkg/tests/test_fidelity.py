import pytest

from vtwin.channel import FidelityConfig, UlaSpec
from vtwin.errors import LinkSetMismatch, NegativeBudget, NoFeasibleConfig
from vtwin.fidelity import (
    DECISION_LOG_HEADER,
    DEFAULT_GROUND_TRUTH,
    BudgetSpec,
    LatencyModel,
    SceneStats,
    compute_budget,
    default_candidates,
    estimate_latency,
    rmse_path_gain,
    select_fidelity,
    write_decision_log,
)
from vtwin.scene import Pose, build_scene, update_poses

ULA = UlaSpec(8)


def bench_scene(n_vehicles=3):
    scene = build_scene({
        "buildings": [
            {"polygon": [[20, 20], [45, 20], [45, 45], [20, 45]], "height": 15.0},
            {"polygon": [[60, 20], [85, 20], [85, 45], [60, 45]], "height": 18.0},
            {"polygon": [[20, 60], [45, 60], [45, 85], [20, 85]], "height": 12.0},
        ],
        "rsus": [{"x": 0.0, "y": 0.0, "z": 10.0},
                 {"x": 100.0, "y": 100.0, "z": 10.0}],
    })
    poses = {f"car{i}": Pose((50.0 + 4.0 * i, 10.0 + 2.0 * i), 0.0, 8.0)
             for i in range(n_vehicles)}
    kinds = {vid: "car" for vid in poses}
    return update_poses(scene, poses, fidelity=3, kinds=kinds)


# -- budget ------------------------------------------------------------------


def test_budget_reference_stage_times():
    assert compute_budget(BudgetSpec()) == pytest.approx(770.0)


def test_budget_scales_cloud_terms_by_kappa():
    assert compute_budget(BudgetSpec(kappa=2.0)) == pytest.approx(700.0)


def test_budget_identity_of_terms():
    spec = BudgetSpec(t_horizon_ms=500.0, t_position_ms=30.0, t_trajpred_ms=5.0,
                      t_rrm_cloud_ms=40.0, t_overhead_ms=10.0, t_guard_ms=15.0,
                      kappa=1.5)
    want = 500.0 - 30.0 - 5.0 - 1.5 * (40.0 + 10.0) - 15.0
    assert compute_budget(spec) == pytest.approx(want)


def test_budget_exhausted_raises():
    with pytest.raises(NegativeBudget):
        compute_budget(BudgetSpec(t_horizon_ms=100.0))


# -- latency model -----------------------------------------------------------


def test_latency_reference_value_on_empty_scene():
    cfg = FidelityConfig(1000, 2, n_paths=10000)
    assert estimate_latency(cfg, SceneStats(0, 0)) == pytest.approx(1.1845, abs=1e-9)


def test_latency_linear_in_kappa():
    cfg = FidelityConfig(2000, 3)
    stats = SceneStats(40, 2)
    one = estimate_latency(cfg, stats, kappa=1.0)
    assert estimate_latency(cfg, stats, kappa=2.5) == pytest.approx(2.5 * one)


def test_latency_monotone_in_rays_and_scene_density():
    stats = SceneStats(40, 2)
    lo = estimate_latency(FidelityConfig(1000, 2), stats)
    hi = estimate_latency(FidelityConfig(5000, 2), stats)
    assert hi > lo
    dense = estimate_latency(FidelityConfig(1000, 2), SceneStats(400, 20))
    assert dense > lo


def test_latency_diffraction_surcharge_is_multiplicative():
    model = LatencyModel()
    stats = SceneStats(40, 2)
    plain = estimate_latency(FidelityConfig(1000, 2), stats, model)
    with_d = estimate_latency(FidelityConfig(1000, 2, diffraction=True), stats, model)
    assert with_d / plain == pytest.approx(model.diffraction_surcharge)


# -- RMSE metric -------------------------------------------------------------


def test_rmse_zero_on_identical_gains():
    gains = {("v0", 0): -80.0, ("v1", 0): -92.5}
    assert rmse_path_gain(gains, dict(gains)) == 0.0


def test_rmse_constant_offset():
    ref = {("v0", 0): -80.0, ("v1", 0): -92.5}
    test = {k: v + 3.0 for k, v in ref.items()}
    assert rmse_path_gain(test, ref) == pytest.approx(3.0)


def test_rmse_mixed_error_example():
    ref = {"a": -80.0, "b": -90.0}
    test = {"a": -80.0, "b": -86.0}
    assert rmse_path_gain(test, ref) == pytest.approx(2.8284271247461903)


def test_rmse_rejects_mismatched_or_empty_link_sets():
    with pytest.raises(LinkSetMismatch):
        rmse_path_gain({"a": 0.0}, {"b": 0.0})
    with pytest.raises(LinkSetMismatch):
        rmse_path_gain({}, {})


# -- candidate selection -------------------------------------------------------


def test_select_picks_ground_truth_when_affordable():
    scene = bench_scene()
    gt = FidelityConfig(20000, 3, diffuse=True, vehicle_fidelity=3)
    cands = [FidelityConfig(500, 2), gt]
    decision = select_fidelity(scene, cands, gt, BudgetSpec(), ULA, seed=4)
    assert decision.cfg == gt
    assert decision.rmse_db == 0.0
    assert not decision.fallback
    assert [ev.chosen for ev in decision.evaluations] == [False, True]


def test_select_prefers_more_rays_when_budget_allows():
    # diffuse detail improves with ray count, so the denser fan sits closer
    # to ground truth and wins despite costing more
    scene = bench_scene()
    gt = FidelityConfig(50000, 2, diffuse=True, vehicle_fidelity=3)
    lo = FidelityConfig(100, 2, diffuse=True, vehicle_fidelity=3)
    hi = FidelityConfig(20000, 2, diffuse=True, vehicle_fidelity=3)
    decision = select_fidelity(scene, [lo, hi], gt, BudgetSpec(), ULA, seed=4)
    evals = {ev.cfg: ev for ev in decision.evaluations}
    assert evals[hi].rmse_db < evals[lo].rmse_db
    assert decision.cfg == hi
    assert decision.est_latency_ms <= decision.budget_ms


def test_select_infeasible_raises_without_fallback():
    scene = bench_scene()
    gt = FidelityConfig(20000, 3, vehicle_fidelity=3)
    cands = [FidelityConfig(5000, 2), FidelityConfig(10000, 2)]
    model = LatencyModel(ms_per_unit=1.0)  # everything costs far too much
    with pytest.raises(NoFeasibleConfig):
        select_fidelity(scene, cands, gt, BudgetSpec(), ULA, seed=4, model=model)


def test_select_fallback_picks_cheapest_and_flags_it():
    scene = bench_scene()
    gt = FidelityConfig(20000, 3, vehicle_fidelity=3)
    cands = [FidelityConfig(10000, 2), FidelityConfig(5000, 2)]
    model = LatencyModel(ms_per_unit=1.0)
    decision = select_fidelity(scene, cands, gt, BudgetSpec(), ULA, seed=4,
                               model=model, allow_fallback=True)
    assert decision.fallback
    assert decision.cfg == cands[1]
    assert decision.est_latency_ms > decision.budget_ms
    assert decision.rmse_db is not None
    infeasible = [ev for ev in decision.evaluations if not ev.feasible]
    assert len(infeasible) == 2


def test_select_budget_reported_and_infeasible_left_unscored():
    scene = bench_scene()
    gt = FidelityConfig(50000, 4, vehicle_fidelity=3)
    cheap = FidelityConfig(500, 2)
    dear = FidelityConfig(50000, 4, vehicle_fidelity=3)
    model = LatencyModel(ms_per_unit=4e-4)  # only the cheap one fits
    decision = select_fidelity(scene, [cheap, dear], gt, BudgetSpec(), ULA,
                               seed=4, model=model)
    assert decision.cfg == cheap
    assert decision.budget_ms == pytest.approx(770.0)
    by_cfg = {ev.cfg: ev for ev in decision.evaluations}
    assert by_cfg[dear].rmse_db is None and not by_cfg[dear].feasible


def test_select_is_deterministic():
    scene = bench_scene()
    gt = FidelityConfig(20000, 3, diffuse=True, vehicle_fidelity=3)
    cands = [FidelityConfig(500, 2), FidelityConfig(2000, 3)]
    a = select_fidelity(scene, cands, gt, BudgetSpec(), ULA, seed=9)
    b = select_fidelity(scene, cands, gt, BudgetSpec(), ULA, seed=9)
    assert a == b


def test_select_validates_inputs():
    scene = bench_scene()
    gt = FidelityConfig(1000, 2)
    with pytest.raises(ValueError):
        select_fidelity(scene, [], gt, BudgetSpec(), ULA, seed=1)
    with pytest.raises(ValueError):
        select_fidelity(scene, [FidelityConfig(2000, 2)], gt, BudgetSpec(),
                        ULA, seed=1)


def test_reference_grid_is_dominated_by_reference_truth():
    cands = default_candidates()
    assert len(cands) == 160
    assert all(DEFAULT_GROUND_TRUTH.dominates(c) for c in cands)


def test_decision_log_format(tmp_path):
    scene = bench_scene()
    gt = FidelityConfig(20000, 3, diffuse=True, vehicle_fidelity=3)
    decision = select_fidelity(scene, [FidelityConfig(500, 2), gt], gt,
                               BudgetSpec(), ULA, seed=4)
    dest = tmp_path / "decisions.csv"
    write_decision_log([(12.0, decision)], dest)
    lines = dest.read_text().splitlines()
    assert lines[0] == DECISION_LOG_HEADER
    assert len(lines) == 3
    cells = lines[2].split(",")
    assert cells[0] == "12.0"
    assert cells[-1] == "1"  # second candidate won
    assert float(cells[9]) == 0.0
