"""Interim snapshots: the data visible at an interim, how much information
they carry, and how their unobserved outcomes are imputed.

Every snapshot knows the patients enrolled so far.  ``analyze`` runs the
interim analysis once and returns an ``InterimState`` that the approximate
and imputed predictive probabilities both consume, so a model fit is never
repeated between methods.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.stats import binom

from .analyses import (
    DichotomousData,
    OrdinalData,
    SurvivalData,
    logrank_test,
    logrank_z_batch,
    prop_odds_test,
    prop_odds_z_batch,
    two_prop_z_batch,
    two_prop_ztest,
)
from .core import CanonicalState, SuccessCriterion, combine_statistics, norm_cdf, norm_ppf
from .information import (
    borrowed_observations,
    clamp_longitudinal_information,
    effective_information,
    project_final_events,
)
from .mcmc import (
    REFIT_MCMC,
    BorrowingModelSpec,
    LongitudinalData,
    LongitudinalModelSpec,
    MCMCSettings,
    borrowing_prob_benefit_batch,
    cell_probabilities,
    fit_borrowing_model,
    fit_longitudinal_model,
    fit_ordinal_model,
)
from .posterior import (
    PosteriorDraws,
    sample_posterior_dichotomous,
    sample_posterior_ordinal,
    sample_posterior_tte,
)

#: Largest information fraction handed to the closed form when an estimate
#: reaches the final information.
MAX_FRACTION = 1.0 - 1e-6


class Target(str, Enum):
    CURRENT_N = "current_N"
    N_MAX = "N_max"


class Method(str, Enum):
    NPP = "npp"
    EPP = "epp"
    IPP = "ipp"


def split_arms(n: int) -> tuple[int, int]:
    """Control/treatment counts for ``n`` further patients under 1:1 blocks of two."""
    return n - n // 2, n // 2


def final_success_from_p(p, criterion: SuccessCriterion):
    """Success of a final analysis summarised by a one-sided p-value.

    With a posterior threshold the Gaussian approximation to the posterior
    under a flat prior gives P(benefit) = 1 - p, so success is p < 1 - eta.
    """
    return np.asarray(p) < 1.0 - criterion.superiority


def _draw_index(n_draws: int, m: int, rng: np.random.Generator) -> np.ndarray:
    if m <= n_draws:
        return (np.arange(m) * n_draws) // m
    return rng.integers(0, n_draws, size=m)


@dataclass
class InterimState:
    """Result of the interim analysis shared by all predictive-probability methods.

    ``superiority`` is 1 - p for frequentist analyses and P(benefit) for
    Bayesian ones.  ``info_estimated`` is the effective information (None when
    not computed).
    """

    superiority: float
    info_n: float
    info_estimated: Optional[float] = None
    draws: Optional[PosteriorDraws] = None
    degenerate: bool = False
    rhat: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return bool(not np.isfinite(self.rhat) or self.rhat < 1.05)


class Snapshot:
    """Base class; subclasses describe one endpoint."""

    enrolled: int
    n_max: int

    def n_future(self, target: Target) -> int:
        if Target(target) is Target.CURRENT_N:
            return 0
        return max(self.n_max - self.enrolled, 0)

    def final_count(self, target: Target) -> int:
        return self.enrolled + self.n_future(target)

    def analyze(self, criterion, methods, rng, settings=None) -> InterimState:  # pragma: no cover
        raise NotImplementedError

    def information(self, state: InterimState, method: Method, target: Target) -> tuple[float, float]:
        n = state.info_n
        return n, float(self.final_count(target))

    def impute_success(self, state, criterion, target, n, rng, settings=None):  # pragma: no cover
        """Boolean success and degenerate-analysis flags for ``n`` imputed trials."""
        raise NotImplementedError


# -- canonical Gaussian endpoint ---------------------------------------------


@dataclass
class CanonicalSnapshot(Snapshot):
    """Exact canonical model; ``state.info_N`` is the final information for either target."""

    state: CanonicalState

    @property
    def enrolled(self) -> int:
        return 0

    n_max = 0

    def information(self, state, method, target):
        return self.state.info_n, self.state.info_N

    def analyze(self, criterion, methods=(), rng=None, settings=None) -> InterimState:
        return InterimState(float(norm_cdf(self.state.z_n)), self.state.info_n)

    def impute_success(self, state, criterion, target, n, rng, settings=None):
        s = self.state
        theta = s.z_n / np.sqrt(s.info_n) + rng.standard_normal(n) / np.sqrt(s.info_n)
        z_rest = theta * np.sqrt(s.info_N - s.info_n) + rng.standard_normal(n)
        z_final = combine_statistics(s.z_n, z_rest, s.info_n, s.info_N)
        ok = z_final > norm_ppf(criterion.superiority)
        return ok, np.zeros(n, dtype=bool)


# -- dichotomous -------------------------------------------------------------


@dataclass
class DichotomousSnapshot(Snapshot):
    """Completed outcomes per arm plus patients enrolled but awaiting their readout."""

    complete: DichotomousData
    pending_control: int
    pending_treatment: int
    n_max: int
    prior: tuple = (1.0, 1.0)
    pooled: bool = True

    @property
    def enrolled(self) -> int:
        c = self.complete
        return c.n_control + c.n_treatment + self.pending_control + self.pending_treatment

    def analyze(self, criterion, methods=(), rng=None, settings=None) -> InterimState:
        c = self.complete
        if c.n_control == 0 or c.n_treatment == 0:
            return InterimState(0.5, c.n_control + c.n_treatment, degenerate=True)
        res = two_prop_ztest(c, self.pooled)
        return InterimState(1.0 - res.p_value, c.n_control + c.n_treatment, degenerate=res.degenerate)

    def impute_success(self, state, criterion, target, n, rng, settings=None):
        c = self.complete
        fc, ft = split_arms(self.n_future(target))
        post = sample_posterior_dichotomous(c, n, rng, self.prior)
        extra_c = self.pending_control + fc
        extra_t = self.pending_treatment + ft
        u = rng.random((2, n))
        x_c = c.events_control + binom.ppf(u[0], extra_c, post["control"])
        x_t = c.events_treatment + binom.ppf(u[1], extra_t, post["treatment"])
        _, p, deg = two_prop_z_batch(
            x_c, c.n_control + extra_c, x_t, c.n_treatment + extra_t, events_bad=c.events_bad,
            pooled=self.pooled,
        )
        return final_success_from_p(p, criterion), deg


# -- time to event -----------------------------------------------------------


@dataclass
class SurvivalSnapshot(Snapshot):
    """Per-patient follow-up at the interim; final analysis once everyone reaches ``follow_up_cap``."""

    entry: np.ndarray
    arm: np.ndarray
    time: np.ndarray
    event: np.ndarray
    analysis_time: float
    follow_up_cap: float
    n_max: int
    assumed_hazard: Optional[float] = None
    prior: tuple = (0.001, 0.001)
    per_arm_projection: bool = False

    def __post_init__(self):
        self.entry = np.asarray(self.entry, dtype=float)
        self.arm = np.asarray(self.arm, dtype=np.int8)
        self.time = np.asarray(self.time, dtype=float)
        self.event = np.asarray(self.event, dtype=bool)

    @property
    def enrolled(self) -> int:
        return int(self.entry.size)

    @property
    def data(self) -> SurvivalData:
        return SurvivalData(self.time, self.event, self.arm)

    def analyze(self, criterion, methods=(), rng=None, settings=None) -> InterimState:
        res = logrank_test(self.data)
        return InterimState(1.0 - res.p_value, float(self.event.sum()), degenerate=res.degenerate)

    def projected_events(self, target: Target) -> float:
        d = self.data
        at_risk = ~self.event
        n_fut = self.n_future(target)
        if not self.per_arm_projection:
            return project_final_events(
                d.events, d.exposure, self.entry, at_risk, self.follow_up_cap,
                self.analysis_time, n_future=n_fut, fallback_hazard=self.assumed_hazard,
            ).expected
        total = 0.0
        for a, fut in zip((0, 1), split_arms(n_fut)):
            m = self.arm == a
            ev, ex = d.arm_summary(a)
            total += project_final_events(
                ev, ex, self.entry[m], at_risk[m], self.follow_up_cap, self.analysis_time,
                n_future=fut, fallback_hazard=self.assumed_hazard,
            ).expected
        return total

    def information(self, state, method, target):
        return state.info_n, self.projected_events(target)

    def impute_success(self, state, criterion, target, n, rng, settings=None):
        post = sample_posterior_tte(self.data, n, rng, self.prior)
        lam = np.stack([post["control"], post["treatment"]], axis=1)  # (n, 2)
        fc, ft = split_arms(self.n_future(target))
        arm = np.concatenate([self.arm, np.zeros(fc, np.int8), np.ones(ft, np.int8)])
        k = self.enrolled
        rate = lam[:, arm]  # (n, k + future)
        remaining = np.where(self.event, 0.0, np.clip(self.follow_up_cap - self.time, 0.0, None))
        start = np.concatenate([self.time, np.zeros(fc + ft)])
        remaining = np.concatenate([remaining, np.full(fc + ft, self.follow_up_cap)])
        # memoryless residual lifetimes
        resid = rng.exponential(1.0, size=rate.shape) / rate
        new_event = resid < remaining[None, :]
        time = start[None, :] + np.minimum(resid, remaining[None, :])
        event = np.concatenate([np.broadcast_to(self.event, (n, k)), np.zeros((n, fc + ft), bool)], axis=1)
        event = event | new_event
        _, p, deg = logrank_z_batch(time, event, arm)
        return final_success_from_p(p, criterion), deg


# -- ordinal -----------------------------------------------------------------


@dataclass
class OrdinalSnapshot(Snapshot):
    """Completed ordinal outcomes (oriented, best category first) and pending patients per arm."""

    complete: np.ndarray
    pending: np.ndarray
    n_max: int
    concentration: float = 1.0 / 6.0

    def __post_init__(self):
        self.complete = np.asarray(self.complete, dtype=np.int64)
        self.pending = np.asarray(self.pending, dtype=np.int64)

    @property
    def enrolled(self) -> int:
        return int(self.complete.sum() + self.pending.sum())

    def analyze(self, criterion, methods=(), rng=None, settings=None) -> InterimState:
        n = float(self.complete.sum())
        if self.complete[0].sum() == 0 or self.complete[1].sum() == 0:
            return InterimState(0.5, n, degenerate=True)
        res = prop_odds_test(OrdinalData(self.complete))
        return InterimState(1.0 - res.p_value, n, degenerate=res.degenerate)

    def impute_success(self, state, criterion, target, n, rng, settings=None):
        post = sample_posterior_ordinal(OrdinalData(self.complete), n, rng, self.concentration)
        fc, ft = split_arms(self.n_future(target))
        tables = np.empty((n, 2, self.complete.shape[1]), dtype=np.int64)
        tables[:, 0] = self.complete[0] + rng.multinomial(int(self.pending[0] + fc), post["control"])
        tables[:, 1] = self.complete[1] + rng.multinomial(int(self.pending[1] + ft), post["treatment"])
        _, p, _, _, deg = prop_odds_z_batch(tables)
        return final_success_from_p(p, criterion), deg


# -- longitudinal ordinal ----------------------------------------------------


@dataclass
class ModelSettings:
    """MCMC settings for the interim fit and for per-imputation refits."""

    mcmc: MCMCSettings = field(default_factory=MCMCSettings)
    refit: MCMCSettings = REFIT_MCMC
    borrowing: BorrowingModelSpec = field(default_factory=BorrowingModelSpec)
    longitudinal: LongitudinalModelSpec = field(default_factory=LongitudinalModelSpec)
    reference_theta_sd: float = 10.0


@dataclass
class LongitudinalSnapshot(Snapshot):
    """Completers with both visits, 30-day-only patients, and patients with no visit yet.

    ``joint[x, i, j]`` counts completers by 30-day category i and 90-day
    category j; ``partial[x, i]`` counts patients seen only at 30 days;
    ``pending[x]`` counts enrolled patients with no outcome yet.
    """

    joint: np.ndarray
    partial: np.ndarray
    pending: np.ndarray
    n_max: int

    def __post_init__(self):
        self.joint = np.asarray(self.joint, dtype=np.int64)
        self.partial = np.asarray(self.partial, dtype=np.int64)
        self.pending = np.asarray(self.pending, dtype=np.int64)

    @property
    def enrolled(self) -> int:
        return int(self.joint.sum() + self.partial.sum() + self.pending.sum())

    @property
    def complete(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    def analyze(self, criterion, methods=(), rng=None, settings=None) -> InterimState:
        settings = settings or ModelSettings()
        data = LongitudinalData(self.joint, self.partial)
        fit = fit_longitudinal_model(data, settings.longitudinal, settings.mcmc, rng)
        n = float(self.joint.sum())
        state = InterimState(fit.prob_benefit, n, draws=fit.draws, rhat=fit.rhat)
        state.extra["theta_var"] = fit.theta_var
        if Method.EPP in methods:
            t0 = time.perf_counter()
            ref = fit_ordinal_model(
                self.complete, theta_sd=settings.longitudinal.theta_sd,
                cutpoint_sd=settings.longitudinal.cutpoint_sd, mcmc=settings.mcmc, rng=rng,
            )
            state.extra["reference_seconds"] = time.perf_counter() - t0
            est = effective_information(ref.theta_var, fit.theta_var, n)
            state.extra["raw_information"] = est
            state.info_estimated = clamp_longitudinal_information(est, n, self.enrolled)
        return state

    def information(self, state, method, target):
        N = float(self.final_count(target))
        if Method(method) is Method.EPP:
            return min(state.info_estimated, MAX_FRACTION * N), N
        return state.info_n, N

    def impute_success(self, state, criterion, target, n, rng, settings=None):
        d = state.draws
        idx = _draw_index(d.n_draws, n, rng)
        alpha, theta, rho = d["alpha"][idx], d["theta"][idx], d["rho"][idx]
        K = self.joint.shape[-1]
        fc, ft = split_arms(self.n_future(target))
        tables = np.broadcast_to(self.complete, (n, 2, K)).copy()
        for x, fut in ((0, fc), (1, ft)):
            p90 = cell_probabilities(alpha, theta * x)  # (n, K)
            for i in range(K):
                m = int(self.partial[x, i])
                if m == 0:
                    continue
                w = p90 * rho[:, i, :]
                w /= w.sum(axis=1, keepdims=True)
                tables[:, x] += rng.multinomial(m, w)
            tables[:, x] += rng.multinomial(int(self.pending[x] + fut), p90)
        _, p, _, _, deg = prop_odds_z_batch(tables)
        return final_success_from_p(p, criterion), deg


# -- ordinal with dynamic borrowing ------------------------------------------


@dataclass
class BorrowingSnapshot(Snapshot):
    """Trial completers, pending patients and the external cohort (oriented counts)."""

    complete: np.ndarray
    pending: np.ndarray
    external: np.ndarray
    n_max: int

    def __post_init__(self):
        self.complete = np.asarray(self.complete, dtype=np.int64)
        self.pending = np.asarray(self.pending, dtype=np.int64)
        self.external = np.asarray(self.external, dtype=np.int64)

    @property
    def enrolled(self) -> int:
        return int(self.complete.sum() + self.pending.sum())

    def analyze(self, criterion, methods=(), rng=None, settings=None) -> InterimState:
        settings = settings or ModelSettings()
        fit = fit_borrowing_model(
            OrdinalData(self.complete), OrdinalData(self.external), settings.borrowing, settings.mcmc, rng
        )
        n = float(self.complete.sum())
        state = InterimState(fit.prob_benefit, n, draws=fit.draws, rhat=fit.rhat)
        state.extra["theta_var"] = fit.theta_var
        if Method.EPP in methods:
            t0 = time.perf_counter()
            ref = fit_ordinal_model(
                self.complete, theta_sd=settings.reference_theta_sd,
                cutpoint_sd=settings.borrowing.cutpoint_sd, mcmc=settings.mcmc, rng=rng,
            )
            state.extra["reference_seconds"] = time.perf_counter() - t0
            est = effective_information(ref.theta_var, fit.theta_var, n)
            bor = borrowed_observations(est, n, float(self.external.sum()))
            state.extra["raw_information"] = est
            state.extra["borrowed"] = bor.value
            state.extra["borrowed_clamped"] = bor.clamped
            state.info_estimated = n + bor.value
        return state

    def information(self, state, method, target):
        N = float(self.final_count(target))
        if Method(method) is Method.EPP:
            bor = state.info_estimated - state.info_n
            return state.info_estimated, N + bor
        return state.info_n, N

    def impute_success(self, state, criterion, target, n, rng, settings=None):
        settings = settings or ModelSettings()
        d = state.draws
        idx = _draw_index(d.n_draws, n, rng)
        alpha, theta0 = d["alpha"][idx], d["theta0"][idx]
        K = self.complete.shape[-1]
        fc, ft = split_arms(self.n_future(target))
        tables = np.broadcast_to(self.complete, (n, 2, K)).copy()
        tables[:, 0] += rng.multinomial(int(self.pending[0] + fc), cell_probabilities(alpha, np.zeros(n)))
        tables[:, 1] += rng.multinomial(int(self.pending[1] + ft), cell_probabilities(alpha, theta0))
        prob = borrowing_prob_benefit_batch(tables, self.external, settings.borrowing, settings.refit, rng)
        return prob > criterion.superiority, np.zeros(n, dtype=bool)
