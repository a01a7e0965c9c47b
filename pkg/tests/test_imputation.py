import numpy as np
import pytest

from predprob.analyses import DichotomousData
from predprob.core import CanonicalState, SuccessCriterion, approx_pp, approx_pp_bayes, norm_cdf
from predprob.imputation import MIN_IMPUTATIONS, approximate_pp, imputed_pp
from predprob.snapshots import CanonicalSnapshot, DichotomousSnapshot, Method, Target
from predprob.simulate import generate_stream, snapshot_at, substream
from predprob.specs import DesignSpec, ExternalCohort, ScenarioSpec

ALPHA = SuccessCriterion("alpha_level", 0.025)


@pytest.mark.parametrize("z,info_n,info_N,alpha", [
    (0.5, 100, 300, 0.025),
    (1.8, 235, 500, 0.025),
    (-0.3, 50, 120, 0.05),
    (2.6, 400, 450, 0.01),
    (1.0, 30, 1000, 0.1),
])
def test_canonical_ipp_matches_closed_form(z, info_n, info_N, alpha):
    snap = CanonicalSnapshot(CanonicalState(z, info_n, info_N))
    crit = SuccessCriterion("alpha_level", alpha)
    res = imputed_pp(snap, crit, n_imputations=100_000, rng=np.random.default_rng(1))
    want = approx_pp(norm_cdf(-z), info_n / info_N, alpha)
    assert abs(res.pp - want) < 3 * np.sqrt(want * (1 - want) / 100_000) + 1e-12


def test_nothing_left_to_impute_gives_indicator():
    rng = np.random.default_rng(2)
    for x_t, want in ((20, 1.0), (38, 0.0)):
        snap = DichotomousSnapshot(DichotomousData(40, 100, x_t, 100), 0, 0, n_max=400)
        res = imputed_pp(snap, ALPHA, Target.CURRENT_N, 200, rng)
        state = snap.analyze(ALPHA)
        assert res.pp == want == float(state.superiority > 0.975)
        pp, info_n, info_N = approximate_pp(snap, state, ALPHA, Target.CURRENT_N)
        assert pp == want and info_n == info_N == 200


def test_minimum_imputations():
    snap = DichotomousSnapshot(DichotomousData(40, 100, 30, 100), 10, 10, n_max=400)
    with pytest.raises(ValueError):
        imputed_pp(snap, ALPHA, n_imputations=MIN_IMPUTATIONS - 1)


def test_seed_invariance():
    snap = DichotomousSnapshot(DichotomousData(60, 118, 45, 117), 33, 32, n_max=500)
    a = imputed_pp(snap, ALPHA, Target.N_MAX, 4000, np.random.default_rng(3))
    b = imputed_pp(snap, ALPHA, Target.N_MAX, 4000, np.random.default_rng(4))
    assert abs(a.pp - b.pp) < 4 * np.hypot(a.mc_se, b.mc_se)


def test_more_treatment_successes_never_lower_ipp():
    # events are bad: removing treatment events adds successes
    for target in Target:
        prev = -1.0
        for x_t in range(60, 30, -1):
            snap = DichotomousSnapshot(DichotomousData(55, 118, x_t, 117), 33, 32, n_max=500)
            pp = imputed_pp(snap, ALPHA, target, 1000, np.random.default_rng(5)).pp
            assert pp >= prev
            prev = pp


def test_dichotomous_closed_form_uses_nominal_information():
    snap = DichotomousSnapshot(DichotomousData(60, 118, 45, 117), 33, 32, n_max=500)
    state = snap.analyze(ALPHA)
    pp, n, N = approximate_pp(snap, state, ALPHA, Target.N_MAX)
    assert (n, N) == (235, 500)
    assert pp == pytest.approx(approx_pp(1 - state.superiority, 235 / 500, 0.025))
    ipp = imputed_pp(snap, ALPHA, Target.N_MAX, 4000, np.random.default_rng(6), state)
    assert abs(ipp.pp - pp) < 0.05


def _snapshot(endpoint, design_kw, scenario_kw, k, seed=0):
    design = DesignSpec(endpoint, **design_kw)
    scen = ScenarioSpec("s", **scenario_kw)
    stream = generate_stream(design, scen, substream(seed, 0, 0))
    return design, snapshot_at(stream, design, scen, k)


def test_survival_snapshot_close_to_closed_form():
    design, snap = _snapshot("time_to_event", dict(n_max=500, interims=(300,), follow_up=52.0),
                             dict(accrual_rate=5.0, control_event_prob=0.3, hazard_ratio=0.75), 300, seed=3)
    state = snap.analyze(design.criterion, (Method.NPP, Method.IPP), np.random.default_rng(0))
    for target in Target:
        a, n, N = approximate_pp(snap, state, design.criterion, target)
        assert 0 < n < N
        b = imputed_pp(snap, design.criterion, target, 2000, np.random.default_rng(1), state).pp
        assert abs(a - b) < 0.06


def test_ordinal_snapshot_close_to_closed_form():
    design, snap = _snapshot("ordinal", dict(n_max=1500, interims=(500,), follow_up=90.0),
                             dict(accrual_rate=2.0, time_unit="day", odds_ratio=1.3), 500, seed=4)
    state = snap.analyze(design.criterion, (Method.NPP, Method.IPP), np.random.default_rng(0))
    for target in Target:
        a = approximate_pp(snap, state, design.criterion, target)[0]
        b = imputed_pp(snap, design.criterion, target, 2000, np.random.default_rng(1), state).pp
        assert abs(a - b) < 0.06


def test_longitudinal_snapshot_information():
    kw = dict(n_max=1500, interims=(500,), follow_up=90.0, early_visit=30.0,
              final_analysis={"kind": "posterior_threshold", "level": 0.975}, methods=("npp", "epp", "ipp"))
    design, snap = _snapshot("longitudinal", kw, dict(accrual_rate=2.0, time_unit="day", odds_ratio=1.4), 500)
    state = snap.analyze(design.criterion, (Method.NPP, Method.EPP, Method.IPP), np.random.default_rng(0),
                         design.model_settings)
    n_nom, N_nom = snap.information(state, Method.NPP, Target.N_MAX)
    n_est, N_est = snap.information(state, Method.EPP, Target.N_MAX)
    assert n_nom == snap.complete.sum()
    assert n_nom <= n_est <= snap.enrolled
    assert N_est == N_nom == 1500
    pp = approximate_pp(snap, state, design.criterion, Target.N_MAX, Method.EPP)[0]
    assert pp == pytest.approx(approx_pp_bayes(state.superiority, n_est / N_est, 0.975))


def test_borrowing_snapshot_information():
    kw = dict(n_max=1500, interims=(500,), follow_up=90.0,
              final_analysis={"kind": "posterior_threshold", "level": 0.975}, methods=("npp", "epp", "ipp"))
    scen = dict(accrual_rate=2.0, time_unit="day", odds_ratio=1.4, external=ExternalCohort())
    design, snap = _snapshot("borrowing", kw, scen, 500)
    state = snap.analyze(design.criterion, (Method.NPP, Method.EPP), np.random.default_rng(0),
                         design.model_settings)
    n, N = snap.information(state, Method.EPP, Target.N_MAX)
    n0, N0 = snap.information(state, Method.NPP, Target.N_MAX)
    borrowed = n - n0
    assert 0 <= borrowed <= 500
    assert N == pytest.approx(N0 + borrowed)
