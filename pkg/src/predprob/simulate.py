"""Virtual Goldilocks trials: accrual, outcomes, interim decisions and
batch operating characteristics.

All patients up to ``n_max`` are generated up front, so every predictive
probability method sees the same data (common random numbers).  By default
each method drives its own trajectory: a trial stopped by one method at an
interim can continue under another.  With ``decision_method`` set, that
method alone acts and the others are recorded as shadows.

Random streams are keyed by ``(master_seed, sim_id, purpose, ...)`` through
``numpy.random.SeedSequence``, so results never depend on worker count or
on which other methods are configured.
"""

from __future__ import annotations

import os
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np

from .analyses import DichotomousData, OrdinalData, SurvivalData, logrank_test, prop_odds_test, two_prop_ztest
from .imputation import approximate_pp, imputed_pp
from .mcmc import fit_borrowing_model
from .snapshots import (
    BorrowingSnapshot,
    DichotomousSnapshot,
    LongitudinalSnapshot,
    Method,
    OrdinalSnapshot,
    SurvivalSnapshot,
    Target,
    final_success_from_p,
)
from .specs import DesignSpec, ScenarioSpec

SUCCESS, FUTILITY, CONTINUE = "success", "futility", "continue"
_DATA, _ANALYSIS, _IMPUTE, _FINAL = 0, 1, 2, 3
_EPS = 1e-9


def substream(master_seed: int, sim_id: int, *keys: int) -> np.random.Generator:
    """Generator for one purpose within one trial: SeedSequence(master_seed, spawn_key=(sim_id, *keys))."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(sim_id, *keys)))


def decide(pp_n: float, pp_max: float, design: DesignSpec) -> str:
    """Goldilocks rule with strict inequalities; success is checked first."""
    if pp_n > design.success_threshold:
        return SUCCESS
    if pp_max < design.futility_threshold:
        return FUTILITY
    return CONTINUE


# -- data generation ---------------------------------------------------------


def shift_odds(probs, odds_ratio: float) -> np.ndarray:
    """Category probabilities after multiplying every cumulative odds by ``odds_ratio``."""
    p = np.asarray(probs, dtype=float)
    cum = np.clip(np.cumsum(p)[:-1], 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        odds = cum / (1.0 - cum) * odds_ratio
        shifted = np.where(np.isinf(odds), 1.0, odds / (1.0 + odds))
    return np.clip(np.diff(np.concatenate([[0.0], shifted, [1.0]])), 0.0, None)


def block_randomize(n: int, rng: np.random.Generator) -> np.ndarray:
    """1:1 allocation in blocks of two with random order inside each block."""
    blocks = -(-n // 2)
    first = rng.integers(0, 2, size=blocks)
    arm = np.stack([first, 1 - first], axis=1).reshape(-1)
    return arm[:n].astype(np.int8)


def accrual_times(n: int, scenario: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    if scenario.accrual == "poisson":
        return np.cumsum(rng.exponential(1.0 / scenario.accrual_rate, size=n))
    return np.arange(n) / scenario.accrual_rate


def hazard_for(event_prob: float, horizon: float) -> float:
    """Exponential hazard giving ``event_prob`` events by ``horizon``."""
    return -np.log1p(-event_prob) / horizon


def _categorical(u: np.ndarray, cdf: np.ndarray) -> np.ndarray:
    return np.minimum((u[:, None] > cdf).sum(axis=1), cdf.shape[1] - 1)


@dataclass
class TrialStream:
    """Every patient up to ``n_max`` with outcomes as they will eventually be observed."""

    entry: np.ndarray
    arm: np.ndarray
    event: Optional[np.ndarray] = None
    event_time: Optional[np.ndarray] = None
    y90: Optional[np.ndarray] = None
    y30: Optional[np.ndarray] = None
    external: Optional[np.ndarray] = None
    n_categories: int = 0


def generate_stream(design: DesignSpec, scenario: ScenarioSpec, rng: np.random.Generator) -> TrialStream:
    n = design.n_max
    entry = accrual_times(n, scenario, rng)
    arm = block_randomize(n, rng)
    s = TrialStream(entry, arm)
    u = rng.random(n)
    if design.endpoint == "dichotomous":
        rate = np.where(arm == 1, scenario.treatment_rate, scenario.control_rate)
        s.event = u < rate
    elif design.endpoint == "time_to_event":
        lam_c = hazard_for(scenario.control_event_prob, design.follow_up)
        lam = np.where(arm == 1, scenario.hazard_ratio * lam_c, lam_c)
        s.event_time = -np.log1p(-u) / lam
    else:
        pc = np.asarray(scenario.control_probs)
        pt = shift_odds(pc, scenario.odds_ratio)
        cdf = np.cumsum(np.stack([pc, pt]), axis=1)[arm]
        s.y90 = _categorical(u, cdf)
        s.n_categories = pc.size
        if design.endpoint == "longitudinal":
            rho = scenario.transition_matrix
            s.y30 = _categorical(rng.random(n), np.cumsum(rho, axis=0)[:, s.y90].T)
        if design.endpoint == "borrowing":
            ext = scenario.external
            qc = pc if ext.control_probs is None else np.asarray(ext.control_probs)
            qt = shift_odds(qc, scenario.odds_ratio if ext.odds_ratio is None else ext.odds_ratio)
            s.external = np.stack([
                rng.multinomial(ext.size_per_arm, qc / qc.sum()),
                rng.multinomial(ext.size_per_arm, qt / qt.sum()),
            ])
    return s


def _table(arm, y, K) -> np.ndarray:
    t = np.zeros((2, K), dtype=np.int64)
    np.add.at(t, (arm.astype(np.int64), y), 1)
    return t


def snapshot_at(stream: TrialStream, design: DesignSpec, scenario: ScenarioSpec, k: int):
    """Data visible when the ``k``-th patient enrols (instantaneous interim)."""
    t = stream.entry[k - 1]
    entry, arm = stream.entry[:k], stream.arm[:k]
    elapsed = t - entry
    complete = elapsed >= design.follow_up - _EPS
    pend = np.bincount(arm[~complete], minlength=2)
    if design.endpoint == "dichotomous":
        ev = stream.event[:k] & complete
        data = DichotomousData(
            int(ev[arm == 0].sum()), int((complete & (arm == 0)).sum()),
            int(ev[arm == 1].sum()), int((complete & (arm == 1)).sum()),
            events_bad=design.events_bad,
        )
        return DichotomousSnapshot(data, int(pend[0]), int(pend[1]), design.n_max,
                                   pooled=design.z_variance == "pooled")
    if design.endpoint == "time_to_event":
        followed = np.minimum(elapsed, design.follow_up)
        et = stream.event_time[:k]
        ev = et <= followed
        p = design.assumed_event_prob or scenario.control_event_prob
        return SurvivalSnapshot(
            entry, arm, np.where(ev, et, followed), ev, t, design.follow_up, design.n_max,
            assumed_hazard=hazard_for(p, design.follow_up), per_arm_projection=design.per_arm_projection,
        )
    K = len(scenario.control_probs)
    done = _table(arm[complete], stream.y90[:k][complete], K)
    if design.endpoint == "ordinal":
        return OrdinalSnapshot(done, pend, design.n_max)
    if design.endpoint == "borrowing":
        return BorrowingSnapshot(done, pend, stream.external, design.n_max)
    early = ~complete & (elapsed >= design.early_visit - _EPS)
    joint = np.zeros((2, K, K), dtype=np.int64)
    np.add.at(joint, (arm[complete].astype(np.int64), stream.y30[:k][complete], stream.y90[:k][complete]), 1)
    partial = _table(arm[early], stream.y30[:k][early], K)
    pending = np.bincount(arm[~complete & ~early], minlength=2)
    return LongitudinalSnapshot(joint, partial, pending, design.n_max)


def completers(snapshot) -> int:
    if isinstance(snapshot, DichotomousSnapshot):
        return snapshot.complete.n_control + snapshot.complete.n_treatment
    if isinstance(snapshot, SurvivalSnapshot):
        return int(np.sum(snapshot.analysis_time - snapshot.entry >= snapshot.follow_up_cap - _EPS))
    if isinstance(snapshot, LongitudinalSnapshot):
        return int(snapshot.joint.sum())
    return int(snapshot.complete.sum())


def final_analysis(stream: TrialStream, design: DesignSpec, n: int, rng: np.random.Generator) -> bool:
    """Final analysis of the first ``n`` patients once all are fully followed."""
    arm = stream.arm[:n]
    crit = design.criterion
    if design.endpoint == "dichotomous":
        ev = stream.event[:n]
        data = DichotomousData(
            int(ev[arm == 0].sum()), int((arm == 0).sum()), int(ev[arm == 1].sum()), int((arm == 1).sum()),
            events_bad=design.events_bad,
        )
        return bool(final_success_from_p(two_prop_ztest(data, design.z_variance == "pooled").p_value, crit))
    if design.endpoint == "time_to_event":
        et = stream.event_time[:n]
        ev = et <= design.follow_up
        res = logrank_test(SurvivalData(np.minimum(et, design.follow_up), ev, arm))
        return bool(final_success_from_p(res.p_value, crit))
    counts = _table(arm, stream.y90[:n], stream.n_categories)
    if design.endpoint == "borrowing":
        ms = design.model_settings
        fit = fit_borrowing_model(OrdinalData(counts), OrdinalData(stream.external), ms.borrowing, ms.mcmc, rng)
        return bool(fit.prob_benefit > crit.superiority)
    return bool(final_success_from_p(prop_odds_test(OrdinalData(counts)).p_value, crit))


# -- single trial ------------------------------------------------------------


@dataclass
class InterimRecord:
    sim_id: int
    scenario: str
    interim_index: int
    enrolled: int
    completers: int
    method: str
    evidence_kind: str
    evidence: float
    info_n: float
    info_N: float
    info_max: float
    pp_n: float
    pp_max: float
    mc_se_n: float
    mc_se_max: float
    decision: str
    acted: bool
    degenerate: bool
    rhat: float
    flagged: int


@dataclass
class MethodOutcome:
    stop_interim: Optional[int]
    reason: str
    final_n: int
    success: bool


@dataclass
class TrialResult:
    sim_id: int
    scenario: str
    master_seed: int
    records: list
    outcomes: dict
    timings: dict = field(default_factory=dict)


def _evidence_kind(design: DesignSpec) -> str:
    return "posterior" if design.endpoint in ("longitudinal", "borrowing") else "p_value"


def simulate_trial(
    design: DesignSpec,
    scenario: ScenarioSpec,
    sim_id: int = 0,
    master_seed: int = 0,
    decision_method: Optional[str] = None,
) -> TrialResult:
    """One virtual trial, deterministic in ``(design, scenario, master_seed, sim_id)``."""
    scenario.require(design.endpoint)
    methods = [Method(m) for m in design.methods]
    lead = Method(decision_method) if decision_method else None
    if lead is not None and lead not in methods:
        raise ValueError(f"decision method {lead.value} is not among the design methods")
    stream = generate_stream(design, scenario, substream(master_seed, sim_id, _DATA))
    crit = design.criterion
    settings = design.model_settings
    kind = _evidence_kind(design)
    active = {m: True for m in methods}
    stopped: dict = {}
    timings = defaultdict(float)
    records = []
    for i, k in enumerate(design.interims):
        live = [m for m in methods if active[m]]
        if not live:
            break
        snap = snapshot_at(stream, design, scenario, k)
        t0 = time.perf_counter()
        state = snap.analyze(crit, tuple(live), substream(master_seed, sim_id, _ANALYSIS, i), settings)
        t_ref = state.extra.pop("reference_seconds", 0.0)
        t_fit = time.perf_counter() - t0 - t_ref
        n_done = completers(snap)
        for m in live:
            t0 = time.perf_counter()
            se = (float("nan"), float("nan"))
            flagged = 0
            if m is Method.IPP:
                res = [
                    imputed_pp(snap, crit, tgt, design.n_imputations,
                               substream(master_seed, sim_id, _IMPUTE, i, j), state, settings)
                    for j, tgt in enumerate((Target.CURRENT_N, Target.N_MAX))
                ]
                pps = (res[0].pp, res[1].pp)
                se = (res[0].mc_se, res[1].mc_se)
                flagged = res[0].n_flagged + res[1].n_flagged
                info_n, info_N = snap.information(state, Method.NPP, Target.CURRENT_N)
                info_max = snap.information(state, Method.NPP, Target.N_MAX)[1]
            else:
                a = approximate_pp(snap, state, crit, Target.CURRENT_N, m)
                b = approximate_pp(snap, state, crit, Target.N_MAX, m)
                pps = (a[0], b[0])
                info_n, info_N, info_max = a[1], a[2], b[2]
            timings[m.value] += time.perf_counter() - t0 + t_fit + (t_ref if m is Method.EPP else 0.0)
            decision = decide(pps[0], pps[1], design)
            acts = lead is None or m is lead
            evidence = 1.0 - state.superiority if kind == "p_value" else state.superiority
            records.append(InterimRecord(
                sim_id, scenario.name, i + 1, k, n_done, m.value, kind, float(evidence),
                float(info_n), float(info_N), float(info_max), float(pps[0]), float(pps[1]),
                float(se[0]), float(se[1]), decision, acts, bool(state.degenerate),
                float(state.rhat), int(flagged),
            ))
            if lead is None and decision != CONTINUE:
                active[m] = False
                stopped[m] = (i + 1, decision, k)
        if lead is not None:
            lead_decision = next(r.decision for r in records if r.interim_index == i + 1 and r.method == lead.value)
            if lead_decision != CONTINUE:
                for m in methods:
                    active[m] = False
                    stopped[m] = (i + 1, lead_decision, k)
    finals: dict = {}
    outcomes = {}
    for m in methods:
        if m in stopped:
            idx, reason, k = stopped[m]
        else:
            idx, reason, k = None, "max", design.n_max
        if reason == FUTILITY:
            outcomes[m.value] = MethodOutcome(idx, reason, k, False)
            continue
        if k not in finals:
            finals[k] = final_analysis(stream, design, k, substream(master_seed, sim_id, _FINAL, k))
        outcomes[m.value] = MethodOutcome(idx, reason, k, finals[k])
    return TrialResult(sim_id, scenario.name, master_seed, records, outcomes, dict(timings))


# -- batches -----------------------------------------------------------------


def _run_one(sim_id: int, design: DesignSpec, scenario: ScenarioSpec, master_seed: int, decision_method):
    return simulate_trial(design, scenario, sim_id, master_seed, decision_method)


def default_parallelism() -> int:
    env = os.environ.get("PREDPROB_PARALLELISM")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"PREDPROB_PARALLELISM must be an integer, got {env!r}") from None
        if value < 1:
            raise ValueError("PREDPROB_PARALLELISM must be at least 1")
        return value
    return 1


def run_batch(
    design: DesignSpec,
    scenario: ScenarioSpec,
    n_sims: int,
    master_seed: int = 0,
    parallelism: Optional[int] = None,
    decision_method: Optional[str] = None,
    sim_offset: int = 0,
) -> list:
    """Simulate ``n_sims`` trials; results are ordered by ``sim_id`` whatever the worker count."""
    if n_sims < 1:
        raise ValueError("n_sims must be at least 1")
    workers = parallelism or default_parallelism()
    ids = range(sim_offset, sim_offset + n_sims)
    fn = partial(_run_one, design=design, scenario=scenario, master_seed=master_seed,
                 decision_method=decision_method)
    if workers == 1:
        return [fn(i) for i in ids]
    chunk = max(1, n_sims // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, ids, chunksize=chunk))


# -- summaries ---------------------------------------------------------------


DEFAULT_THRESHOLDS = tuple(np.round(np.arange(0.01, 1.0, 0.01), 2))


def concordance_curve(pp_a, pp_b, thresholds=DEFAULT_THRESHOLDS) -> np.ndarray:
    """Fraction of pairs on the same side of each threshold: mean((a > t) == (b > t))."""
    a = np.asarray(pp_a, dtype=float)
    b = np.asarray(pp_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired predictive probabilities must be 1-d arrays of equal length")
    if a.size == 0:
        return np.full(len(thresholds), np.nan)
    t = np.asarray(thresholds, dtype=float)[:, None]
    return ((a[None, :] > t) == (b[None, :] > t)).mean(axis=1)


def paired_records(results, method_a: str, method_b: str, interim_index: Optional[int] = None):
    """(record_a, record_b) pairs for trial interims reached under both methods."""
    pairs = []
    for res in results:
        by = {}
        for r in res.records:
            if interim_index is not None and r.interim_index != interim_index:
                continue
            by.setdefault(r.interim_index, {})[r.method] = r
        for idx in sorted(by):
            if method_a in by[idx] and method_b in by[idx]:
                pairs.append((by[idx][method_a], by[idx][method_b]))
    return pairs


def decision_agreement(results, method_a: str, method_b: str, interim_index: Optional[int] = None) -> float:
    pairs = paired_records(results, method_a, method_b, interim_index)
    if not pairs:
        return float("nan")
    return float(np.mean([a.decision == b.decision for a, b in pairs]))


@dataclass
class BatchSummary:
    """Operating characteristics per scenario and method.

    ``stops`` rows: scenario, method, interim, p_success, p_futility (both as
    fractions of all simulated trials).  ``totals`` rows add the overall stop
    probability, the probability of final success and the mean sample size.
    ``agreement`` rows compare each method with the reference per interim.
    """

    stops: list
    totals: list
    agreement: list
    concordance: list


def summarize(results, design: DesignSpec, reference: str = "ipp", thresholds=DEFAULT_THRESHOLDS) -> BatchSummary:
    by_scenario = defaultdict(list)
    for r in results:
        by_scenario[r.scenario].append(r)
    stops, totals, agreement, concordance = [], [], [], []
    n_int = len(design.interims)
    for name, res in by_scenario.items():
        n = len(res)
        for m in design.methods:
            succ = np.zeros(n_int)
            fut = np.zeros(n_int)
            finals = 0
            size = 0.0
            for r in res:
                o = r.outcomes[m]
                if o.stop_interim is not None:
                    (succ if o.reason == SUCCESS else fut)[o.stop_interim - 1] += 1
                finals += o.success
                size += o.final_n
            for i in range(n_int):
                stops.append({"scenario": name, "method": m, "interim": i + 1,
                              "p_success": succ[i] / n, "p_futility": fut[i] / n})
            totals.append({"scenario": name, "method": m, "p_stop": (succ.sum() + fut.sum()) / n,
                           "p_stop_success": succ.sum() / n, "p_stop_futility": fut.sum() / n,
                           "p_final_success": finals / n, "mean_sample_size": size / n, "n_sims": n})
        if reference not in design.methods:
            continue
        for m in design.methods:
            if m == reference:
                continue
            for i in range(1, n_int + 1):
                pairs = paired_records(res, m, reference, i)
                if not pairs:
                    continue
                diff_n = np.array([a.pp_n - b.pp_n for a, b in pairs])
                diff_max = np.array([a.pp_max - b.pp_max for a, b in pairs])
                agreement.append({
                    "scenario": name, "method": m, "reference": reference, "interim": i,
                    "n_pairs": len(pairs),
                    "decision_agreement": float(np.mean([a.decision == b.decision for a, b in pairs])),
                    "mean_abs_diff_n": float(np.abs(diff_n).mean()),
                    "mean_abs_diff_max": float(np.abs(diff_max).mean()),
                    "mean_diff_n": float(diff_n.mean()),
                    "mean_diff_max": float(diff_max.mean()),
                })
                for target, attr in (("N", "pp_n"), ("max", "pp_max")):
                    a = [getattr(p, attr) for p, _ in pairs]
                    b = [getattr(q, attr) for _, q in pairs]
                    for t, v in zip(thresholds, concordance_curve(a, b, thresholds)):
                        concordance.append({"scenario": name, "method": m, "reference": reference,
                                            "interim": i, "target": target, "threshold": float(t),
                                            "agreement": float(v)})
    return BatchSummary(stops, totals, agreement, concordance)
