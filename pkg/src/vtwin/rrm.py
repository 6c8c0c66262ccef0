"""Beam selection and user association by iterative coordinate descent.

The decision variable is one beam index per RSU.  A configuration is scored
by a proportional-fairness objective over the users it can serve at an
acceptable SINR, with a fixed penalty per unserved user; ties break on the
worst served SINR.  A multi-start coordinate descent (greedy seed first,
random restarts after) optimizes the score; exhaustive enumeration over all
W^B states provides the exact reference on small instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyNetwork, SearchSpaceTooLarge
from .phy import LinkBudget, sinr_linear

DEFAULT_MAX_USERS_PER_RSU = 20
DEFAULT_OUTAGE_PENALTY = 1000.0
DEFAULT_RESTARTS = 5
DEFAULT_MAX_PASSES = 20
EXHAUSTIVE_CAP = 10 ** 6


@dataclass(frozen=True)
class RrmParams:
    max_users_per_rsu: int = DEFAULT_MAX_USERS_PER_RSU
    outage_penalty: float = DEFAULT_OUTAGE_PENALTY
    n_restarts: int = DEFAULT_RESTARTS
    max_passes: int = DEFAULT_MAX_PASSES


@dataclass(frozen=True)
class EvalScore:
    """Lexicographic objective: pf_score first, then worst served SINR (dB)."""

    pf_score: float
    worst_sinr_db: float

    def key(self) -> tuple[float, float]:
        return (self.pf_score, self.worst_sinr_db)

    def __gt__(self, other: "EvalScore") -> bool:
        return self.key() > other.key()

    def __ge__(self, other: "EvalScore") -> bool:
        return self.key() >= other.key()


@dataclass(frozen=True)
class EvalResult:
    score: EvalScore
    serving: np.ndarray  # (u,) RSU index or -1 when unserved
    sinr_db: np.ndarray  # (u,) SINR at the chosen serving RSU (from best RSU if unserved)


def evaluate_config(gains: np.ndarray, beams, budget: LinkBudget,
                    params: RrmParams = RrmParams()) -> EvalResult:
    """Score one global beam state.

    Each user tentatively associates with the RSU giving it the highest exact
    SINR under the state.  Users whose best SINR falls below gamma_min are
    dropped; an overloaded RSU keeps only its top users by spectral
    efficiency.  pf_score is sum(ln(log2(1 + sinr))) over served users minus
    outage_penalty per unserved user.
    """
    gains = np.asarray(gains, dtype=float)
    if gains.ndim != 3 or 0 in gains.shape:
        raise EmptyNetwork(f"gain tensor with shape {gains.shape} has an empty axis")
    n_u, n_b, _ = gains.shape

    sinr = sinr_linear(gains, beams, budget.p_tx_w, budget.noise_w)  # (u, b)
    best_b = np.argmax(sinr, axis=1)
    best_sinr = sinr[np.arange(n_u), best_b]

    serving = np.where(best_sinr >= budget.gamma_min_linear, best_b, -1)
    se = np.log2(1.0 + best_sinr)
    for b in range(n_b):
        members = np.flatnonzero(serving == b)
        if len(members) > params.max_users_per_rsu:
            order = members[np.argsort(-se[members], kind="stable")]
            serving[order[params.max_users_per_rsu:]] = -1

    served = serving >= 0
    n_out = int(n_u - served.sum())
    if served.any():
        pf = float(np.sum(np.log(np.log2(1.0 + best_sinr[served]))))
        worst_db = float(10.0 * np.log10(best_sinr[served].min()))
    else:
        pf = 0.0
        worst_db = -math.inf
    pf -= params.outage_penalty * n_out

    with np.errstate(divide="ignore"):
        sinr_db = 10.0 * np.log10(np.where(best_sinr > 0, best_sinr, np.nan))
    sinr_db = np.where(np.isnan(sinr_db), -np.inf, sinr_db)
    return EvalResult(score=EvalScore(pf, worst_db), serving=serving,
                      sinr_db=sinr_db)


def greedy_seed(gains: np.ndarray) -> np.ndarray:
    """Per-RSU beam maximizing its best single-user gain, ignoring interference."""
    gains = np.asarray(gains, dtype=float)
    if gains.ndim != 3 or 0 in gains.shape:
        raise EmptyNetwork(f"gain tensor with shape {gains.shape} has an empty axis")
    return np.argmax(gains.max(axis=0), axis=1)


@dataclass
class SolveResult:
    beams: np.ndarray
    result: EvalResult
    eval_count: int
    trace: list[tuple[int, int, float, float]] = field(default_factory=list)


def icd_solve(gains: np.ndarray, budget: LinkBudget,
              params: RrmParams = RrmParams(), seed: int = 0,
              keep_trace: bool = False) -> SolveResult:
    """Multi-start iterative coordinate descent over per-RSU beam indices.

    Restart 0 starts from the greedy seed, later restarts from uniform random
    states.  Each pass visits RSUs in a fresh random permutation and replaces
    a beam only on a strict lexicographic improvement; descent stops after a
    pass with no change.  Work is bounded by n_restarts * max_passes * B * W
    scoring calls plus one per restart.
    """
    gains = np.asarray(gains, dtype=float)
    if gains.ndim != 3 or 0 in gains.shape:
        raise EmptyNetwork(f"gain tensor with shape {gains.shape} has an empty axis")
    _, n_b, n_w = gains.shape

    best_global: tuple[EvalScore, np.ndarray, EvalResult] | None = None
    evals = 0
    trace: list[tuple[int, int, float, float]] = []

    for restart in range(params.n_restarts):
        rng = np.random.default_rng(np.random.PCG64((seed, restart)))
        if restart == 0:
            beams = greedy_seed(gains)
        else:
            beams = rng.integers(0, n_w, size=n_b)
        current = evaluate_config(gains, beams, budget, params)
        evals += 1

        for pass_idx in range(params.max_passes):
            improved = False
            for b in rng.permutation(n_b):
                best_beam = int(beams[b])
                best_here = current
                for w in range(n_w):
                    if w == beams[b]:
                        continue
                    cand = beams.copy()
                    cand[b] = w
                    res = evaluate_config(gains, cand, budget, params)
                    evals += 1
                    if res.score > best_here.score:
                        best_here = res
                        best_beam = w
                if best_beam != beams[b]:
                    beams[b] = best_beam
                    current = best_here
                    improved = True
            if keep_trace:
                trace.append((restart, pass_idx, current.score.pf_score,
                              current.score.worst_sinr_db))
            if not improved:
                break

        if best_global is None or current.score > best_global[0]:
            best_global = (current.score, beams.copy(), current)

    score, beams, result = best_global
    return SolveResult(beams=beams, result=result, eval_count=evals, trace=trace)


def exhaustive_solve(gains: np.ndarray, budget: LinkBudget,
                     params: RrmParams = RrmParams(),
                     cap: int = EXHAUSTIVE_CAP) -> SolveResult:
    """Enumerate all W^B beam states; ties keep the lexicographically smallest."""
    gains = np.asarray(gains, dtype=float)
    if gains.ndim != 3 or 0 in gains.shape:
        raise EmptyNetwork(f"gain tensor with shape {gains.shape} has an empty axis")
    _, n_b, n_w = gains.shape
    size = n_w ** n_b
    if size > cap:
        raise SearchSpaceTooLarge(f"W^B = {size} exceeds cap {cap}")

    best: tuple[EvalScore, np.ndarray, EvalResult] | None = None
    evals = 0
    for combo in itertools.product(range(n_w), repeat=n_b):
        beams = np.array(combo, dtype=np.int64)
        res = evaluate_config(gains, beams, budget, params)
        evals += 1
        if best is None or res.score > best[0]:
            best = (res.score, beams, res)
    score, beams, result = best
    return SolveResult(beams=beams, result=result, eval_count=evals)


@dataclass(frozen=True)
class NetworkMetrics:
    sum_rate_bps: float
    outage_prob: float
    n_served: int


def network_metrics(result: EvalResult, budget: LinkBudget) -> NetworkMetrics:
    """Aggregate sum rate and outage for an evaluated configuration.

    A user counts toward outage when unserved or when its SINR sits below
    gamma_min; only users above the threshold contribute rate.
    """
    n_u = len(result.serving)
    if n_u == 0:
        return NetworkMetrics(0.0, 0.0, 0)
    sinr_lin = 10.0 ** (result.sinr_db / 10.0)
    ok = (result.serving >= 0) & (sinr_lin >= budget.gamma_min_linear)
    rate = float(budget.bandwidth_hz * np.sum(np.log2(1.0 + sinr_lin[ok])))
    return NetworkMetrics(sum_rate_bps=rate,
                          outage_prob=float(1.0 - ok.sum() / n_u),
                          n_served=int(ok.sum()))


SOLVER_TRACE_HEADER = "restart,pass,pf_score,worst_sinr_db"


def write_solver_trace(result: SolveResult, dest) -> None:
    from pathlib import Path as _P
    own = isinstance(dest, (str, _P))
    fh = open(dest, "w", newline="") if own else dest
    try:
        fh.write(SOLVER_TRACE_HEADER + "\n")
        for restart, pass_idx, pf, worst in result.trace:
            fh.write(f"{restart},{pass_idx},{pf!r},{worst!r}\n")
    finally:
        if own:
            fh.close()
