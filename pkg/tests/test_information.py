import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from predprob.core import DomainError
from predprob.information import (
    InformationSpec,
    borrowed_observations,
    clamp_longitudinal_information,
    effective_information,
    nominal_information,
    project_final_events,
)


def test_nominal_dichotomous():
    assert nominal_information(InformationSpec("dichotomous", 235, 500)) == (235.0, 500.0)


def test_nominal_events():
    assert nominal_information(InformationSpec("time_to_event", 40, 120, units="events")) == (40.0, 120.0)


def test_nominal_errors():
    with pytest.raises(DomainError):
        InformationSpec("dichotomous", 500, 500)
    with pytest.raises(DomainError):
        nominal_information(InformationSpec("time_to_event", 40))
    with pytest.raises(DomainError):
        InformationSpec("time_to_event", 40, 120, units="patients")


def test_effective_information_examples():
    assert effective_information(2.0, 1.0, 100) == 200
    assert effective_information(1.0, 1.0, 100) == 100
    with pytest.raises(DomainError):
        effective_information(0.0, 1.0, 100)


@given(st.floats(0.01, 10), st.floats(0.01, 10), st.floats(1, 1000), st.floats(0.1, 10))
def test_effective_information_scaling(vr, vt, info, k):
    base = effective_information(vr, vt, info)
    assert effective_information(vr, vt, k * info) == pytest.approx(k * base, rel=1e-12)
    assert effective_information(k * vr, vt, info) == pytest.approx(k * base, rel=1e-12)
    assert effective_information(vr, vt * (1 + k), info) < base


def test_borrowed_observations():
    assert borrowed_observations(650, 500).value == 150
    assert borrowed_observations(500, 500).value == 0
    b = borrowed_observations(450, 500)
    assert b.value == 0 and b.raw == -50 and b.clamped
    assert borrowed_observations(900, 500, max_borrowed=250).value == 250


def test_longitudinal_clamp():
    assert clamp_longitudinal_information(300, 320, 500) == 320
    assert clamp_longitudinal_information(600, 320, 500) == 500
    assert clamp_longitudinal_information(400, 320, 500) == 400


def test_projection_no_follow_up_left():
    entry = np.zeros(10)
    proj = project_final_events(4, 100.0, entry, np.ones(10, bool), follow_up_cap=1.0, analysis_time=5.0)
    assert proj.expected == 4 and proj.rounded == 4


def test_projection_hand_example():
    # 30 events over 100 patient-years; one at-risk patient with exactly one year left
    proj = project_final_events(30, 100.0, [0.0], [True], follow_up_cap=2.0, analysis_time=1.0)
    assert proj.expected == pytest.approx(30 + (1 - math.exp(-0.3)), abs=1e-12)
    assert round(proj.expected, 2) == 30.26
    assert proj.rounded == 31


def test_projection_monotone():
    rng = np.random.default_rng(3)
    entry = rng.uniform(0, 2, 50)
    risk = rng.random(50) < 0.8
    a = project_final_events(10, 40.0, entry, risk, 1.0, 2.0).expected
    b = project_final_events(10, 20.0, entry, risk, 1.0, 2.0).expected
    c = project_final_events(10, 40.0, entry, risk, 1.5, 2.0).expected
    assert b >= a and c >= a


def test_projection_fallback_hazard():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        proj = project_final_events(0, 10.0, [0.5], [True], 1.0, 1.0, fallback_hazard=0.2)
    assert proj.used_fallback and caught
    assert proj.expected == pytest.approx(1 - math.exp(-0.2 * 0.5))
    with pytest.raises(DomainError):
        project_final_events(0, 10.0, [0.5], [True], 1.0, 1.0)


def test_projection_against_brute_force():
    # TTE interim at 300 enrolled, 5/week, 52-week cap, HR 1, 30% one-year control event rate.
    # Average projection over simulated interims against the average completed-trial event count.
    lam = -math.log(0.7) / 52.0
    rng = np.random.default_rng(11)
    entry = np.arange(300) / 5.0
    t_now = entry[-1]
    followed = np.minimum(t_now - entry, 52.0)
    reps = 10_000
    projected = np.empty(reps)
    final = np.empty(reps)
    for i in range(reps):
        ev_time = rng.exponential(1 / lam, 500)
        event = ev_time[:300] <= followed
        exposure = np.minimum(ev_time[:300], followed).sum()
        projected[i] = project_final_events(int(event.sum()), exposure, entry, ~event, 52.0, t_now,
                                            n_future=200).expected
        final[i] = (ev_time <= 52.0).sum()
    assert abs(projected.mean() - final.mean()) / final.mean() < 0.10
