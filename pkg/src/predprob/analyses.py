"""Frequentist primary analyses returning one-sided p-values oriented to benefit.

Each test has a scalar form working on a data container and a batched form
used by the imputation engine, which evaluates thousands of completed
datasets at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import expit, ndtr

from .core import DomainError


class TestResult(NamedTuple):
    z: float
    p_value: float
    degenerate: bool


class OrdinalResult(NamedTuple):
    z: float
    p_value: float
    log_or: float
    se: float
    degenerate: bool


@dataclass(frozen=True)
class DichotomousData:
    """Per-arm event counts.  ``events_bad`` says whether an event is harmful."""

    events_control: int
    n_control: int
    events_treatment: int
    n_treatment: int
    events_bad: bool = True

    def __post_init__(self):
        for name in ("events_control", "n_control", "events_treatment", "n_treatment"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        if self.events_control > self.n_control or self.events_treatment > self.n_treatment:
            raise DomainError("events cannot exceed arm size")


@dataclass(frozen=True)
class SurvivalData:
    """Per-subject observation time, event indicator and arm (0 control, 1 treatment)."""

    time: np.ndarray
    event: np.ndarray
    arm: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float)
        e = np.asarray(self.event, dtype=bool)
        a = np.asarray(self.arm, dtype=np.int8)
        if not (t.shape == e.shape == a.shape):
            raise DomainError("time, event and arm must have equal length")
        if np.any(t < 0):
            raise DomainError("observation times must be non-negative")
        if np.any((a != 0) & (a != 1)):
            raise DomainError("arm must be 0 (control) or 1 (treatment)")
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "event", e)
        object.__setattr__(self, "arm", a)

    @property
    def events(self) -> int:
        return int(self.event.sum())

    @property
    def exposure(self) -> float:
        return float(self.time.sum())

    def arm_summary(self, arm: int) -> tuple[int, float]:
        m = self.arm == arm
        return int(self.event[m].sum()), float(self.time[m].sum())


@dataclass(frozen=True)
class OrdinalData:
    """Category counts, row 0 control and row 1 treatment.

    Column 0 is the most favourable category when ``lower_is_better``;
    otherwise the columns are reversed before analysis.
    """

    counts: np.ndarray
    lower_is_better: bool = True

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != 2 or c.shape[1] < 2:
            raise DomainError("ordinal counts must have shape (2, K) with K >= 2")
        if np.any(c < 0):
            raise DomainError("counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_subjects(cls, arm, category, n_categories: int = 6, lower_is_better: bool = True):
        arm = np.asarray(arm, dtype=np.int64)
        category = np.asarray(category, dtype=np.int64)
        if np.any((category < 0) | (category >= n_categories)):
            raise DomainError("category out of range")
        counts = np.zeros((2, n_categories), dtype=np.int64)
        np.add.at(counts, (arm, category), 1)
        return cls(counts, lower_is_better)

    @property
    def oriented(self) -> np.ndarray:
        """Counts with the most favourable category first."""
        return self.counts if self.lower_is_better else self.counts[:, ::-1]

    @property
    def n_categories(self) -> int:
        return self.counts.shape[1]


# -- two proportions ---------------------------------------------------------


def two_prop_z_batch(x_c, n_c, x_t, n_t, events_bad: bool = True, pooled: bool = True):
    """Two-proportion z statistics for arrays of tables.

    ``pooled`` selects the null (pooled) variance; otherwise each arm
    contributes its own binomial variance.  Returns ``(z, p, degenerate)``;
    degenerate tables (zero variance or an empty arm) get z = 0 and p = 0.5.
    """
    x_c = np.asarray(x_c, dtype=float)
    x_t = np.asarray(x_t, dtype=float)
    n_c = np.asarray(n_c, dtype=float)
    n_t = np.asarray(n_t, dtype=float)
    n_c, n_t, x_c, x_t = np.broadcast_arrays(n_c, n_t, x_c, x_t)
    tot = n_c + n_t
    rate = np.divide(x_c + x_t, tot, out=np.zeros_like(tot), where=tot > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r_c = x_c / n_c
        r_t = x_t / n_t
        if pooled:
            var = rate * (1.0 - rate) * (1.0 / n_c + 1.0 / n_t)
        else:
            var = r_c * (1.0 - r_c) / n_c + r_t * (1.0 - r_t) / n_t
        diff = r_c - r_t
    if not events_bad:
        diff = -diff
    degenerate = (n_c <= 0) | (n_t <= 0) | ~(var > 0)
    z = np.where(degenerate, 0.0, diff / np.sqrt(np.where(degenerate, 1.0, var)))
    return z, ndtr(-z), degenerate


def two_prop_ztest(data: DichotomousData, pooled: bool = True) -> TestResult:
    if data.n_control == 0 or data.n_treatment == 0:
        raise DomainError("both arms need at least one observation")
    z, p, d = two_prop_z_batch(
        data.events_control, data.n_control, data.events_treatment, data.n_treatment,
        events_bad=data.events_bad, pooled=pooled,
    )
    return TestResult(float(z), float(p), bool(d))


# -- log-rank ----------------------------------------------------------------


def logrank_test(data: SurvivalData) -> TestResult:
    """Log-rank test with hypergeometric variance at tied event times.

    z is positive when the treatment arm has fewer events than expected.
    """
    if data.events == 0:
        return TestResult(0.0, 0.5, True)
    t_all = np.sort(data.time)
    t_trt = np.sort(data.time[data.arm == 1])
    ev_times = data.time[data.event]
    uniq, d = np.unique(ev_times, return_counts=True)
    d_t = np.unique(np.concatenate([uniq, data.time[data.event & (data.arm == 1)]]), return_counts=True)[1] - 1
    n_risk = t_all.size - np.searchsorted(t_all, uniq, side="left")
    n_t = t_trt.size - np.searchsorted(t_trt, uniq, side="left")
    expected = d * n_t / n_risk
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(
            n_risk > 1,
            d * (n_t / n_risk) * (1 - n_t / n_risk) * (n_risk - d) / (n_risk - 1),
            0.0,
        )
    var = float(v.sum())
    if var <= 0:
        return TestResult(0.0, 0.5, True)
    z = float((expected.sum() - d_t.sum()) / np.sqrt(var))
    return TestResult(z, float(ndtr(-z)), False)


def logrank_z_batch(time, event, arm):
    """Log-rank z for many datasets sharing an arm vector.

    ``time`` and ``event`` have shape (M, n).  Event times are assumed free
    of ties (continuous imputation); each event is its own risk set.
    Returns ``(z, p, degenerate)``.
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    arm = np.broadcast_to(np.asarray(arm, dtype=np.int8), time.shape)
    order = np.argsort(time, axis=1, kind="stable")
    ev = np.take_along_axis(event, order, axis=1)
    tr = np.take_along_axis(arm, order, axis=1).astype(float)
    n = time.shape[1]
    n_risk = (n - np.arange(n, dtype=float))[None, :]
    n_t = np.cumsum(tr[:, ::-1], axis=1)[:, ::-1]
    frac = n_t / n_risk
    expected = np.where(ev, frac, 0.0).sum(axis=1)
    var = np.where(ev, frac * (1.0 - frac), 0.0).sum(axis=1)
    observed = (ev & (tr > 0)).sum(axis=1)
    degenerate = ~(var > 0)
    z = np.where(degenerate, 0.0, (expected - observed) / np.sqrt(np.where(degenerate, 1.0, var)))
    return z, ndtr(-z), degenerate


# -- proportional odds -------------------------------------------------------

_ARM = np.array([0.0, 1.0])


def _design(K: int) -> np.ndarray:
    """V[x, j, p]: derivative of the j-th linear predictor in arm x wrt parameter p."""
    V = np.zeros((2, K - 1, K))
    for j in range(K - 1):
        V[:, j, j] = 1.0
    V[1, :, K - 1] = 1.0
    return V


def _cum_probs(params: np.ndarray):
    """Cumulative probabilities F[m, x, j] = expit(alpha_j + theta * x)."""
    alpha = params[:, :-1]
    theta = params[:, -1]
    eta = alpha[:, None, :] + theta[:, None, None] * _ARM[None, :, None]
    return expit(eta)


def _cell_probs(F: np.ndarray) -> np.ndarray:
    M = F.shape[0]
    zeros = np.zeros((M, 2, 1))
    ones = np.ones((M, 2, 1))
    return np.diff(np.concatenate([zeros, F, ones], axis=2), axis=2)


def prop_odds_loglik(params, tables) -> np.ndarray:
    """Log-likelihood of the cumulative logit model logit P(Y <= j) = alpha_j + theta * x.

    ``params`` is (M, K) with the K - 1 cutpoints followed by theta;
    ``tables`` is (M, 2, K).  Non-increasing cutpoints give -inf.
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    tables = np.asarray(tables, dtype=float).reshape(params.shape[0], 2, -1)
    P = _cell_probs(_cum_probs(params))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(tables > 0, tables * np.log(np.where(P > 0, P, np.nan)), 0.0)
    ll = terms.sum(axis=(1, 2))
    return np.where(np.isnan(ll), -np.inf, ll)


def _derivatives(params, tables, hessian: bool = True):
    M, K = params.shape
    V = _design(K)
    F = _cum_probs(params)
    f = F * (1.0 - F)
    P = _cell_probs(F)
    dF = f[..., None] * V[None]
    pad = np.zeros((M, 2, 1, K))
    dFp = np.concatenate([pad, dF, pad], axis=2)
    dP = dFp[:, :, 1:, :] - dFp[:, :, :-1, :]
    w = np.divide(tables, P, out=np.zeros_like(P), where=tables > 0)
    grad = np.einsum("mxk,mxkp->mp", w, dP)
    if not hessian:
        return grad, None
    f2 = f * (1.0 - 2.0 * F)
    VV = V[:, :, :, None] * V[:, :, None, :]
    d2F = f2[..., None, None] * VV[None]
    pad2 = np.zeros((M, 2, 1, K, K))
    d2Fp = np.concatenate([pad2, d2F, pad2], axis=2)
    d2P = d2Fp[:, :, 1:] - d2Fp[:, :, :-1]
    w2 = np.divide(tables, P * P, out=np.zeros_like(P), where=tables > 0)
    H = np.einsum("mxk,mxkpq->mpq", w, d2P) - np.einsum("mxk,mxkp,mxkq->mpq", w2, dP, dP)
    return grad, H


def prop_odds_score(params, tables) -> np.ndarray:
    params = np.atleast_2d(np.asarray(params, dtype=float))
    tables = np.asarray(tables, dtype=float).reshape(params.shape[0], 2, -1)
    return _derivatives(params, tables, hessian=False)[0]


def prop_odds_hessian(params, tables) -> np.ndarray:
    params = np.atleast_2d(np.asarray(params, dtype=float))
    tables = np.asarray(tables, dtype=float).reshape(params.shape[0], 2, -1)
    return _derivatives(params, tables)[1]


def _initial_params(tables: np.ndarray) -> np.ndarray:
    pooled = tables.sum(axis=1)
    cum = np.cumsum(pooled, axis=1)[:, :-1] / pooled.sum(axis=1, keepdims=True)
    cum = np.clip(cum, 1e-4, 1 - 1e-4)
    alpha = np.log(cum / (1 - cum))
    alpha = np.maximum.accumulate(alpha + 1e-6 * np.arange(alpha.shape[1]), axis=1)
    return np.concatenate([alpha, np.zeros((tables.shape[0], 1))], axis=1)


@dataclass
class OrdinalFit:
    params: np.ndarray
    se_theta: np.ndarray
    converged: np.ndarray
    iterations: int = 0
    loglik: np.ndarray = field(default=None)


def fit_prop_odds_batch(tables, tol: float = 1e-8, max_iter: int = 100) -> OrdinalFit:
    """Newton-Raphson MLE with step-halving for many (2, K) tables at once.

    Every pooled category must be occupied; callers collapse empty ones.
    """
    tables = np.asarray(tables, dtype=float)
    M, _, K = tables.shape
    params = _initial_params(tables)
    ll = prop_odds_loglik(params, tables)
    active = np.ones(M, dtype=bool)
    converged = np.zeros(M, dtype=bool)
    it = 0
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        g, H = _derivatives(params[idx], tables[idx])
        gnorm = np.sqrt((g * g).sum(axis=1))
        done = gnorm < tol
        converged[idx[done]] = True
        active[idx[done]] = False
        keep = ~done
        idx, g, H = idx[keep], g[keep], H[keep]
        if idx.size == 0:
            break
        try:
            step = np.linalg.solve(H, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.empty_like(g)
            for i in range(idx.size):
                step[i] = np.linalg.lstsq(H[i], g[i], rcond=None)[0]
        # Newton on a concave log-likelihood: params - H^{-1} g
        scale = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(40):
            cand = params[idx] - scale[:, None] * step
            ll_c = prop_odds_loglik(cand, tables[idx])
            ok = pending & (ll_c >= ll[idx] - 1e-12)
            sel = idx[ok]
            params[sel] = cand[ok]
            ll[sel] = ll_c[ok]
            pending &= ~ok
            if not pending.any():
                break
            scale = np.where(pending, scale * 0.5, scale)
        # rows that could not improve are at a numerical optimum or stuck
        stuck = idx[pending]
        active[stuck] = False
        if stuck.size:
            g_s = _derivatives(params[stuck], tables[stuck], hessian=False)[0]
            converged[stuck] = np.sqrt((g_s * g_s).sum(axis=1)) < 1e-6
    _, H = _derivatives(params, tables)
    se = np.full(M, np.nan)
    for i in range(M):
        try:
            cov = np.linalg.inv(-H[i])
            if cov[-1, -1] > 0:
                se[i] = np.sqrt(cov[-1, -1])
        except np.linalg.LinAlgError:
            pass
    return OrdinalFit(params, se, converged & np.isfinite(se), it, ll)


def _collapse(table: np.ndarray) -> np.ndarray:
    return table[:, table.sum(axis=0) > 0]


def prop_odds_z_batch(tables, lower_is_better: bool = True):
    """Wald z for the proportional-odds treatment effect over a stack of tables.

    Returns ``(z, p, log_or, se, degenerate)`` arrays; z > 0 favours treatment.
    """
    tables = np.asarray(tables, dtype=np.int64)
    if not lower_is_better:
        tables = tables[..., ::-1]
    M = tables.shape[0]
    z = np.zeros(M)
    log_or = np.zeros(M)
    se = np.full(M, np.nan)
    degenerate = np.zeros(M, dtype=bool)
    pooled = tables.sum(axis=1)
    regular = np.all(pooled > 0, axis=1)
    occ_c = tables[:, 0, :] > 0
    occ_t = tables[:, 1, :] > 0
    K = tables.shape[2]
    ar = np.arange(K)
    min_c = np.where(occ_c, ar, K).min(axis=1)
    max_c = np.where(occ_c, ar, -1).max(axis=1)
    min_t = np.where(occ_t, ar, K).min(axis=1)
    max_t = np.where(occ_t, ar, -1).max(axis=1)
    sep = (max_t < min_c) | (max_c < min_t)
    degenerate |= sep
    regular &= ~sep
    idx = np.flatnonzero(regular)
    if idx.size:
        fit = fit_prop_odds_batch(tables[idx].astype(float))
        ok = fit.converged
        z[idx[ok]] = fit.params[ok, -1] / fit.se_theta[ok]
        log_or[idx[ok]] = fit.params[ok, -1]
        se[idx[ok]] = fit.se_theta[ok]
        degenerate[idx[~ok]] = True
    for i in np.flatnonzero(~regular & ~sep):
        t = _collapse(tables[i])
        if t.shape[1] < 2:
            degenerate[i] = True
            continue
        fit = fit_prop_odds_batch(t[None].astype(float))
        if fit.converged[0]:
            log_or[i] = fit.params[0, -1]
            se[i] = fit.se_theta[0]
            z[i] = log_or[i] / se[i]
        else:
            degenerate[i] = True
    z = np.where(degenerate, 0.0, z)
    return z, ndtr(-z), log_or, se, degenerate


def prop_odds_test(data: OrdinalData) -> OrdinalResult:
    """Wald test of the proportional-odds treatment effect.

    The log odds ratio is positive when treatment shifts patients toward
    favourable categories.
    """
    if data.counts[0].sum() == 0 or data.counts[1].sum() == 0:
        raise DomainError("both arms need at least one observation")
    z, p, lor, se, d = prop_odds_z_batch(data.counts[None], data.lower_is_better)
    return OrdinalResult(float(z[0]), float(p[0]), float(lor[0]), float(se[0]), bool(d[0]))
