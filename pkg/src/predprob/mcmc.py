"""Metropolis-within-Gibbs samplers for the Bayesian ordinal analyses.

Two models share one cumulative-logit likelihood, logit P(Y <= j) = alpha_j + shift:

* dynamic borrowing: shift = beta * z + theta_z * x, with theta_0, theta_1
  drawn from N(mu, tau2), mu ~ N(mu_mean, mu_sd^2), tau2 ~ InvGamma(shape, scale);
* longitudinal: shift = theta * x for the 90-day outcome, with reverse
  transition probabilities rho[i30, j90] linking the 30-day outcome, and
  90-day outcomes of partially followed patients augmented at every sweep.

Data enter as count tables, so a sweep costs O(categories) regardless of
sample size.  Single-site random-walk updates are followed by a joint
random-walk move on the cutpoints and treatment effects whose covariance is
learned during burn-in; the cutpoints are strongly correlated with the
treatment effect, and single-site moves alone mix slowly.  The kernels are compiled with numba and run chains one after
another, which keeps the per-chain cost identical whether a fit has two
chains or two thousand.  Column 0 is the most favourable category and
theta > 0 means benefit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from scipy.special import expit

from .analyses import OrdinalData
from .posterior import PosteriorDraws

_TARGET_ACCEPT = 0.44
_ADAPT_EVERY = 50
_BLOCK_TARGET = 0.234


@dataclass(frozen=True)
class MCMCSettings:
    n_chains: int = 2
    n_burn: int = 1000
    n_keep: int = 1000

    def __post_init__(self):
        if self.n_chains < 1 or self.n_burn < 0 or self.n_keep < 1:
            raise ValueError("invalid MCMC settings")


REFIT_MCMC = MCMCSettings(n_chains=2, n_burn=200, n_keep=200)


@dataclass(frozen=True)
class BorrowingModelSpec:
    """Hierarchical prior linking the trial and external treatment effects.

    ``tau2_parameterization`` is ``"shape_scale"`` (density proportional to
    x^(-shape-1) exp(-scale/x)) or ``"precision_scale"`` (1/tau2 is Gamma
    with the given shape and scale).  ``fixed_tau2`` switches off the
    variance update and borrows with a fixed between-effect variance.
    """

    mu_mean: float = 0.0
    mu_sd: float = 1.0
    tau2_shape: float = 0.125
    tau2_scale: float = 0.00281
    tau2_parameterization: str = "shape_scale"
    fixed_tau2: Optional[float] = None
    cutpoint_sd: float = 10.0
    beta_sd: float = 10.0

    def __post_init__(self):
        if self.tau2_shape <= 0 or self.tau2_scale <= 0:
            raise ValueError("InvGamma shape and scale must be positive")
        if self.tau2_parameterization not in ("shape_scale", "precision_scale"):
            raise ValueError(f"unknown tau2 parameterization {self.tau2_parameterization!r}")
        if self.fixed_tau2 is not None and self.fixed_tau2 <= 0:
            raise ValueError("fixed_tau2 must be positive")

    @property
    def invgamma_scale(self) -> float:
        if self.tau2_parameterization == "shape_scale":
            return self.tau2_scale
        return 1.0 / self.tau2_scale

    def sample_tau2_prior(self, size, rng: np.random.Generator) -> np.ndarray:
        return self.invgamma_scale / rng.gamma(self.tau2_shape, 1.0, size=size)


@dataclass(frozen=True)
class LongitudinalModelSpec:
    rho_concentration: float = 1.0 / 6.0
    theta_mean: float = 0.0
    theta_sd: float = 10.0
    cutpoint_sd: float = 10.0

    def __post_init__(self):
        if self.rho_concentration <= 0:
            raise ValueError("Dirichlet concentration must be positive")


# -- compiled pieces ---------------------------------------------------------


@njit(cache=True)
def _expit(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def _cell_prob(alpha, shift, k):
    K1 = alpha.shape[0]
    hi = 1.0 if k == K1 else _expit(alpha[k] + shift)
    lo = 0.0 if k == 0 else _expit(alpha[k - 1] + shift)
    return hi - lo


@njit(cache=True)
def _row_ll(counts, alpha, shift):
    ll = 0.0
    for k in range(counts.shape[0]):
        n = counts[k]
        if n > 0:
            p = _cell_prob(alpha, shift, k)
            if p <= 0.0:
                return -np.inf
            ll += n * np.log(p)
    return ll


@njit(cache=True)
def _pair_ll(counts, alpha, shift, j):
    """Log-likelihood of the two cells touched by cutpoint j."""
    ll = 0.0
    for k in (j, j + 1):
        n = counts[k]
        if n > 0:
            p = _cell_prob(alpha, shift, k)
            if p <= 0.0:
                return -np.inf
            ll += n * np.log(p)
    return ll


@njit(cache=True)
def _ordered_ok(alpha, j, value):
    if j > 0 and value <= alpha[j - 1]:
        return False
    if j < alpha.shape[0] - 1 and value >= alpha[j + 1]:
        return False
    return True


@njit(cache=True)
def _gauss_lp(x, mean, sd):
    if sd <= 0.0:
        return 0.0
    d = (x - mean) / sd
    return -0.5 * d * d


@njit(cache=True)
def _adapt(log_step, acc, tries, blk):
    # single-site moves aim for 0.44 acceptance, the block move for 0.234
    for i in range(log_step.shape[0]):
        if tries[i] > 0:
            rate = acc[i] / tries[i]
            target = _BLOCK_TARGET if i == blk else _TARGET_ACCEPT
            step = (rate - target) / target if rate < target else (rate - target) / (1.0 - target)
            log_step[i] += 0.5 * step
        acc[i] = 0.0
        tries[i] = 0.0


#: Block random-walk proposals per sweep once the proposal covariance is learned.
N_BLOCK = 3


@njit(cache=True)
def _block_factor(s1, s2, n):
    """Scaled Cholesky factor of the empirical covariance of the block coordinates."""
    d = s1.shape[0]
    cov = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            cov[i, j] = s2[i, j] / n - (s1[i] / n) * (s1[j] / n)
    scale = 2.38 * 2.38 / d
    for i in range(d):
        for j in range(d):
            cov[i, j] *= scale
        cov[i, i] += 1e-8 + 1e-3 * cov[i, i]
    return np.linalg.cholesky(cov)


@njit(cache=True)
def _accumulate(v, s1, s2):
    d = v.shape[0]
    for i in range(d):
        s1[i] += v[i]
        for j in range(d):
            s2[i, j] += v[i] * v[j]


@njit(cache=True)
def _block_proposal(v, L, log_scale):
    d = v.shape[0]
    z = np.empty(d)
    for i in range(d):
        z[i] = np.random.standard_normal()
    prop = v.copy()
    f = np.exp(log_scale)
    for i in range(d):
        s = 0.0
        for j in range(i + 1):
            s += L[i, j] * z[j]
        prop[i] += f * s
    return prop


@njit(cache=True)
def _is_ordered(alpha):
    for j in range(1, alpha.shape[0]):
        if alpha[j] <= alpha[j - 1]:
            return False
    return True


@njit(cache=True)
def _borrow_ll(c, alpha, beta, th0, th1):
    return (_row_ll(c[0, 0], alpha, 0.0) + _row_ll(c[0, 1], alpha, th0)
            + _row_ll(c[1, 0], alpha, beta) + _row_ll(c[1, 1], alpha, beta + th1))


@njit(cache=True)
def _borrowing_chains(counts, init, n_burn, n_keep, seeds, prior, fixed_tau2, out):
    """counts[b, z, x, k]; init[b] = (alpha..., beta, theta0, theta1, mu, tau2).

    Burn-in: first half single-site adaptation, third quarter collects the
    covariance of (alpha, beta, theta0, theta1), last quarter tunes the scale
    of a block random-walk move.  All tuning is frozen for the kept draws.
    """
    B = counts.shape[0]
    K1 = counts.shape[3] - 1
    alpha_sd, beta_sd, mu_mean, mu_sd, ig_shape, ig_scale = (
        prior[0], prior[1], prior[2], prior[3], prior[4], prior[5])
    n_mh = K1 + 6
    blk = K1 + 5
    d = K1 + 3
    half = n_burn // 2
    three_q = (3 * n_burn) // 4
    accept_total = np.zeros((B, n_mh))
    for b in range(B):
        np.random.seed(seeds[b])
        c = counts[b]
        alpha = init[b, :K1].copy()
        beta = init[b, K1]
        th = np.array([init[b, K1 + 1], init[b, K1 + 2]])
        mu = init[b, K1 + 3]
        tau2 = fixed_tau2 if fixed_tau2 > 0 else init[b, K1 + 4]
        log_step = np.full(n_mh, np.log(0.15))
        log_step[blk] = 0.0
        acc = np.zeros(n_mh)
        tries = np.zeros(n_mh)
        s1 = np.zeros(d)
        s2 = np.zeros((d, d))
        ns = 0
        L = np.eye(d)
        use_block = False
        v = np.empty(d)
        for it in range(n_burn + n_keep):
            # cutpoints
            for j in range(K1):
                prop = alpha[j] + np.exp(log_step[j]) * np.random.standard_normal()
                tries[j] += 1
                if not _ordered_ok(alpha, j, prop):
                    continue
                old = 0.0
                for z in range(2):
                    for x in range(2):
                        old += _pair_ll(c[z, x], alpha, beta * z + th[z] * x, j)
                keep = alpha[j]
                alpha[j] = prop
                new = 0.0
                for z in range(2):
                    for x in range(2):
                        new += _pair_ll(c[z, x], alpha, beta * z + th[z] * x, j)
                lr = new - old + _gauss_lp(prop, 0.0, alpha_sd) - _gauss_lp(keep, 0.0, alpha_sd)
                if np.log(np.random.random()) < lr:
                    acc[j] += 1
                else:
                    alpha[j] = keep
            # external-population shift
            prop = beta + np.exp(log_step[K1]) * np.random.standard_normal()
            tries[K1] += 1
            lr = (_row_ll(c[1, 0], alpha, prop) + _row_ll(c[1, 1], alpha, prop + th[1])
                  - _row_ll(c[1, 0], alpha, beta) - _row_ll(c[1, 1], alpha, beta + th[1])
                  + _gauss_lp(prop, 0.0, beta_sd) - _gauss_lp(beta, 0.0, beta_sd))
            if np.log(np.random.random()) < lr:
                beta = prop
                acc[K1] += 1
            # treatment effects
            sd = np.sqrt(tau2)
            for z in range(2):
                s = K1 + 1 + z
                prop = th[z] + np.exp(log_step[s]) * np.random.standard_normal()
                tries[s] += 1
                base = beta * z
                lr = (_row_ll(c[z, 1], alpha, base + prop) - _row_ll(c[z, 1], alpha, base + th[z])
                      + _gauss_lp(prop, mu, sd) - _gauss_lp(th[z], mu, sd))
                if np.log(np.random.random()) < lr:
                    th[z] = prop
                    acc[s] += 1
            # joint translation of (theta0, theta1, mu); leaves theta | mu untouched
            s = K1 + 3
            delta = np.exp(log_step[s]) * np.random.standard_normal()
            tries[s] += 1
            lr = (_row_ll(c[0, 1], alpha, th[0] + delta) - _row_ll(c[0, 1], alpha, th[0])
                  + _row_ll(c[1, 1], alpha, beta + th[1] + delta) - _row_ll(c[1, 1], alpha, beta + th[1])
                  + _gauss_lp(mu + delta, mu_mean, mu_sd) - _gauss_lp(mu, mu_mean, mu_sd))
            if np.log(np.random.random()) < lr:
                th[0] += delta
                th[1] += delta
                mu += delta
                acc[s] += 1
            # block move on (alpha, beta, theta0, theta1)
            for _rep in range(N_BLOCK if use_block else 0):
                for j in range(K1):
                    v[j] = alpha[j]
                v[K1] = beta
                v[K1 + 1] = th[0]
                v[K1 + 2] = th[1]
                pv = _block_proposal(v, L, log_step[blk])
                tries[blk] += 1
                pa = pv[:K1]
                if _is_ordered(pa):
                    sd = np.sqrt(tau2)
                    lr = (_borrow_ll(c, pa, pv[K1], pv[K1 + 1], pv[K1 + 2])
                          - _borrow_ll(c, alpha, beta, th[0], th[1])
                          + _gauss_lp(pv[K1], 0.0, beta_sd) - _gauss_lp(beta, 0.0, beta_sd)
                          + _gauss_lp(pv[K1 + 1], mu, sd) - _gauss_lp(th[0], mu, sd)
                          + _gauss_lp(pv[K1 + 2], mu, sd) - _gauss_lp(th[1], mu, sd))
                    for j in range(K1):
                        lr += _gauss_lp(pa[j], 0.0, alpha_sd) - _gauss_lp(alpha[j], 0.0, alpha_sd)
                    if np.log(np.random.random()) < lr:
                        for j in range(K1):
                            alpha[j] = pa[j]
                        beta = pv[K1]
                        th[0] = pv[K1 + 1]
                        th[1] = pv[K1 + 2]
                        acc[blk] += 1
            # hierarchical mean and variance, conjugate
            prec = 2.0 / tau2 + 1.0 / (mu_sd * mu_sd)
            m = ((th[0] + th[1]) / tau2 + mu_mean / (mu_sd * mu_sd)) / prec
            mu = m + np.random.standard_normal() / np.sqrt(prec)
            if fixed_tau2 <= 0:
                # rescale tau2 with the deviations theta_z - mu held fixed in units of tau
                s = K1 + 4
                u = np.exp(log_step[s]) * np.random.standard_normal()
                tries[s] += 1
                t_new = tau2 * np.exp(u)
                f = np.exp(0.5 * u)
                n0 = mu + (th[0] - mu) * f
                n1 = mu + (th[1] - mu) * f
                lr = (_row_ll(c[0, 1], alpha, n0) - _row_ll(c[0, 1], alpha, th[0])
                      + _row_ll(c[1, 1], alpha, beta + n1) - _row_ll(c[1, 1], alpha, beta + th[1])
                      - (ig_shape + 1.0) * u - ig_scale / t_new + ig_scale / tau2 + u)
                if np.log(np.random.random()) < lr:
                    tau2 = t_new
                    th[0] = n0
                    th[1] = n1
                    acc[s] += 1
                ss = (th[0] - mu) ** 2 + (th[1] - mu) ** 2
                g = np.random.gamma(ig_shape + 1.0, 1.0)
                tau2 = (ig_scale + 0.5 * ss) / g
                if tau2 < 1e-300:
                    tau2 = 1e-300
            if it < n_burn:
                if half <= it < three_q:
                    for j in range(K1):
                        v[j] = alpha[j]
                    v[K1] = beta
                    v[K1 + 1] = th[0]
                    v[K1 + 2] = th[1]
                    _accumulate(v, s1, s2)
                    ns += 1
                if it + 1 == three_q and ns > d:
                    L = _block_factor(s1, s2, ns)
                    use_block = True
                if (it + 1) % _ADAPT_EVERY == 0 or it + 1 == n_burn:
                    _adapt(log_step, acc, tries, blk)
            else:
                k = it - n_burn
                for j in range(K1):
                    out[b, k, j] = alpha[j]
                out[b, k, K1] = beta
                out[b, k, K1 + 1] = th[0]
                out[b, k, K1 + 2] = th[1]
                out[b, k, K1 + 3] = mu
                out[b, k, K1 + 4] = tau2
        # acceptance over the kept iterations (counters reset at each adaptation)
        for j in range(n_mh):
            accept_total[b, j] = acc[j] / max(tries[j], 1.0)
    return accept_total


@njit(cache=True)
def _multinomial_into(n, probs, dest):
    remaining = n
    mass = 1.0
    K = probs.shape[0]
    for k in range(K - 1):
        if remaining <= 0:
            break
        if mass <= 0.0:
            break
        q = probs[k] / mass
        if q >= 1.0:
            dest[k] += remaining
            remaining = 0
            break
        if q > 0.0:
            d = np.random.binomial(remaining, q)
            dest[k] += d
            remaining -= d
        mass -= probs[k]
    if remaining > 0:
        dest[K - 1] += remaining


@njit(cache=True)
def _longitudinal_chains(joint, direct, partial, init, n_burn, n_keep, seeds, prior, out):
    """joint[b, x, i30, j90] completers with both visits; direct[b, x, j90] completers
    with no 30-day record; partial[b, x, i30] patients with only a 30-day outcome.

    init[b] = (alpha..., theta, rho[i30, j90] flattened row-major).
    """
    B = joint.shape[0]
    K = joint.shape[3]
    K1 = K - 1
    alpha_sd, theta_mean, theta_sd, conc = prior[0], prior[1], prior[2], prior[3]
    n_mh = K1 + 2
    blk = K1 + 1
    d = K1 + 1
    half = n_burn // 2
    three_q = (3 * n_burn) // 4
    accept_total = np.zeros((B, n_mh))
    tab = np.zeros((2, K))
    aug = np.zeros((2, K, K))
    p90 = np.zeros(K)
    cond = np.zeros(K)
    g = np.zeros(K)
    for b in range(B):
        np.random.seed(seeds[b])
        alpha = init[b, :K1].copy()
        theta = init[b, K1]
        rho = init[b, K1 + 1:].copy().reshape((K, K))
        has_partial = partial[b].sum() > 0
        log_step = np.full(n_mh, np.log(0.15))
        log_step[blk] = 0.0
        acc = np.zeros(n_mh)
        tries = np.zeros(n_mh)
        s1 = np.zeros(d)
        s2 = np.zeros((d, d))
        ns = 0
        L = np.eye(d)
        use_block = False
        v = np.empty(d)
        for it in range(n_burn + n_keep):
            # 90-day outcomes of partially followed patients
            aug[:, :, :] = 0.0
            if has_partial:
                for x in range(2):
                    for k in range(K):
                        p90[k] = _cell_prob(alpha, theta * x, k)
                    for i in range(K):
                        n = int(partial[b, x, i])
                        if n == 0:
                            continue
                        tot = 0.0
                        for j in range(K):
                            cond[j] = p90[j] * rho[i, j]
                            tot += cond[j]
                        if tot <= 0.0:
                            for j in range(K):
                                cond[j] = p90[j]
                            tot = 1.0
                        for j in range(K):
                            cond[j] /= tot
                        _multinomial_into(n, cond, aug[x, i])
                # reverse transitions: column j is P(Y30 = . | Y90 = j)
                for j in range(K):
                    tot = 0.0
                    for i in range(K):
                        g[i] = np.random.gamma(conc + joint[b, 0, i, j] + joint[b, 1, i, j]
                                               + aug[0, i, j] + aug[1, i, j], 1.0)
                        tot += g[i]
                    for i in range(K):
                        rho[i, j] = g[i] / tot if tot > 0 else 1.0 / K
            for x in range(2):
                for j in range(K):
                    s = direct[b, x, j]
                    for i in range(K):
                        s += joint[b, x, i, j] + aug[x, i, j]
                    tab[x, j] = s
            for j in range(K1):
                prop = alpha[j] + np.exp(log_step[j]) * np.random.standard_normal()
                tries[j] += 1
                if not _ordered_ok(alpha, j, prop):
                    continue
                old = _pair_ll(tab[0], alpha, 0.0, j) + _pair_ll(tab[1], alpha, theta, j)
                keep = alpha[j]
                alpha[j] = prop
                new = _pair_ll(tab[0], alpha, 0.0, j) + _pair_ll(tab[1], alpha, theta, j)
                lr = new - old + _gauss_lp(prop, 0.0, alpha_sd) - _gauss_lp(keep, 0.0, alpha_sd)
                if np.log(np.random.random()) < lr:
                    acc[j] += 1
                else:
                    alpha[j] = keep
            prop = theta + np.exp(log_step[K1]) * np.random.standard_normal()
            tries[K1] += 1
            lr = (_row_ll(tab[1], alpha, prop) - _row_ll(tab[1], alpha, theta)
                  + _gauss_lp(prop, theta_mean, theta_sd) - _gauss_lp(theta, theta_mean, theta_sd))
            if np.log(np.random.random()) < lr:
                theta = prop
                acc[K1] += 1
            for _rep in range(N_BLOCK if use_block else 0):
                for j in range(K1):
                    v[j] = alpha[j]
                v[K1] = theta
                pv = _block_proposal(v, L, log_step[blk])
                tries[blk] += 1
                pa = pv[:K1]
                if _is_ordered(pa):
                    lr = (_row_ll(tab[0], pa, 0.0) + _row_ll(tab[1], pa, pv[K1])
                          - _row_ll(tab[0], alpha, 0.0) - _row_ll(tab[1], alpha, theta)
                          + _gauss_lp(pv[K1], theta_mean, theta_sd) - _gauss_lp(theta, theta_mean, theta_sd))
                    for j in range(K1):
                        lr += _gauss_lp(pa[j], 0.0, alpha_sd) - _gauss_lp(alpha[j], 0.0, alpha_sd)
                    if np.log(np.random.random()) < lr:
                        for j in range(K1):
                            alpha[j] = pa[j]
                        theta = pv[K1]
                        acc[blk] += 1
            if it < n_burn:
                if half <= it < three_q:
                    for j in range(K1):
                        v[j] = alpha[j]
                    v[K1] = theta
                    _accumulate(v, s1, s2)
                    ns += 1
                if it + 1 == three_q and ns > d:
                    L = _block_factor(s1, s2, ns)
                    use_block = True
                if (it + 1) % _ADAPT_EVERY == 0 or it + 1 == n_burn:
                    _adapt(log_step, acc, tries, blk)
            else:
                k = it - n_burn
                for j in range(K1):
                    out[b, k, j] = alpha[j]
                out[b, k, K1] = theta
                for i in range(K):
                    for j in range(K):
                        out[b, k, K1 + 1 + i * K + j] = rho[i, j]
        for j in range(n_mh):
            accept_total[b, j] = acc[j] / max(tries[j], 1.0)
    return accept_total


# -- diagnostics -------------------------------------------------------------


def split_rhat(chains: np.ndarray) -> float:
    """Split-R-hat for draws shaped (n_chains, n_draws)."""
    chains = np.asarray(chains, dtype=float)
    n = chains.shape[1] // 2
    if n < 2:
        return float("nan")
    halves = np.concatenate([chains[:, :n], chains[:, n:2 * n]], axis=0)
    w = halves.var(axis=1, ddof=1).mean()
    b = n * halves.mean(axis=1).var(ddof=1)
    if w <= 0:
        return float("nan") if b > 0 else 1.0
    var_plus = (n - 1) / n * w + b / n
    return float(np.sqrt(var_plus / w))


# -- fits --------------------------------------------------------------------


@dataclass
class MCMCFit:
    draws: PosteriorDraws
    prob_benefit: float
    theta_mean: float
    theta_var: float
    rhat: float
    acceptance: np.ndarray

    @property
    def converged(self) -> bool:
        return bool(np.isfinite(self.rhat) and self.rhat < 1.05)


def _seeds(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, 2**31 - 1, size=n, dtype=np.int64)


def _cutpoint_init(table: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Empirical cumulative logits of ``table`` (K,) with per-chain jitter."""
    K = table.shape[-1]
    cum = (np.cumsum(table)[:-1] + 0.5) / (table.sum() + 0.5 * K)
    cum = np.clip(cum, 1e-3, 1 - 1e-3)
    base = np.log(cum / (1 - cum))
    base = base + 1e-3 * np.arange(K - 1)
    base = np.maximum.accumulate(base)
    jit = rng.normal(0.0, 0.05, size=(n, 1))
    return base[None, :] + jit


def _oriented(data: OrdinalData) -> np.ndarray:
    return np.asarray(data.oriented, dtype=float)


def borrowing_chains(
    trial_tables: np.ndarray,
    external: np.ndarray,
    spec: BorrowingModelSpec,
    mcmc: MCMCSettings,
    rng: np.random.Generator,
):
    """Run ``mcmc.n_chains`` chains for each oriented trial table in ``trial_tables`` (M, 2, K).

    Returns draws shaped (M, n_chains, n_keep, P) and acceptance rates.
    """
    trial_tables = np.asarray(trial_tables, dtype=float)
    M, _, K = trial_tables.shape
    C = mcmc.n_chains
    B = M * C
    counts = np.empty((B, 2, 2, K))
    counts[:, 0] = np.repeat(trial_tables, C, axis=0)
    counts[:, 1] = np.asarray(external, dtype=float)[None]
    pooled = trial_tables.sum(axis=1) + np.asarray(external, dtype=float).sum(axis=0)[None]
    init = np.zeros((B, K - 1 + 5))
    for m in range(M):
        init[m * C:(m + 1) * C, :K - 1] = _cutpoint_init(pooled[m], C, rng)
    init[:, K - 1] = rng.normal(0, 0.05, B)
    init[:, K] = rng.normal(0, 0.05, B)
    init[:, K + 1] = rng.normal(0, 0.05, B)
    init[:, K + 2] = 0.0
    init[:, K + 3] = spec.fixed_tau2 if spec.fixed_tau2 else spec.invgamma_scale / spec.tau2_shape
    prior = np.array([spec.cutpoint_sd, spec.beta_sd, spec.mu_mean, spec.mu_sd,
                      spec.tau2_shape, spec.invgamma_scale])
    out = np.empty((B, mcmc.n_keep, K - 1 + 5))
    acc = _borrowing_chains(counts, init, mcmc.n_burn, mcmc.n_keep, _seeds(rng, B), prior,
                            float(spec.fixed_tau2 or 0.0), out)
    return out.reshape(M, C, mcmc.n_keep, -1), acc.reshape(M, C, -1)


BORROWING_PARAMS = ("beta", "theta0", "theta1", "mu", "tau2")


def fit_borrowing_model(
    trial: OrdinalData,
    external: OrdinalData,
    spec: BorrowingModelSpec = BorrowingModelSpec(),
    mcmc: MCMCSettings = MCMCSettings(),
    rng: Optional[np.random.Generator] = None,
) -> MCMCFit:
    """Posterior of the dynamic-borrowing cumulative logit model.

    ``prob_benefit`` is the posterior probability that the trial odds ratio
    favours treatment (theta0 > 0).
    """
    if mcmc.n_chains < 2:
        raise ValueError("convergence diagnostics need at least two chains")
    if trial.counts.sum() == 0 or external.counts.sum() == 0:
        raise ValueError("trial and external data must be non-empty")
    rng = rng if rng is not None else np.random.default_rng()
    draws, acc = borrowing_chains(_oriented(trial)[None], _oriented(external), spec, mcmc, rng)
    draws = draws[0]
    K1 = trial.n_categories - 1
    flat = draws.reshape(-1, draws.shape[-1])
    params = {"alpha": flat[:, :K1]}
    for i, name in enumerate(BORROWING_PARAMS):
        params[name] = flat[:, K1 + i]
    theta0 = params["theta0"]
    return MCMCFit(
        draws=PosteriorDraws(params, "ordinal-borrowing"),
        prob_benefit=float(np.mean(theta0 > 0)),
        theta_mean=float(theta0.mean()),
        theta_var=float(theta0.var(ddof=1)),
        rhat=split_rhat(draws[:, :, K1 + 1]),
        acceptance=acc[0].mean(axis=0),
    )


def borrowing_prob_benefit_batch(
    trial_tables: np.ndarray,
    external: np.ndarray,
    spec: BorrowingModelSpec,
    mcmc: MCMCSettings,
    rng: np.random.Generator,
) -> np.ndarray:
    """Posterior P(theta0 > 0) for each oriented trial table; one short fit per table."""
    draws, _ = borrowing_chains(trial_tables, external, spec, mcmc, rng)
    K1 = np.asarray(trial_tables).shape[2] - 1
    return (draws[..., K1 + 1] > 0).mean(axis=(1, 2))


@dataclass(frozen=True)
class LongitudinalData:
    """Oriented counts for the 30/90-day model.

    ``joint[x, i, j]`` completers with 30-day category i and 90-day category j;
    ``direct[x, j]`` completers without a 30-day record; ``partial[x, i]``
    patients with a 30-day outcome but no 90-day outcome yet.
    """

    joint: np.ndarray
    partial: np.ndarray
    direct: Optional[np.ndarray] = None

    def __post_init__(self):
        joint = np.asarray(self.joint, dtype=float)
        K = joint.shape[-1]
        partial = np.asarray(self.partial, dtype=float)
        direct = np.zeros((2, K)) if self.direct is None else np.asarray(self.direct, dtype=float)
        if joint.shape != (2, K, K) or partial.shape != (2, K) or direct.shape != (2, K):
            raise ValueError("inconsistent longitudinal table shapes")
        if np.any(joint < 0) or np.any(partial < 0) or np.any(direct < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "joint", joint)
        object.__setattr__(self, "partial", partial)
        object.__setattr__(self, "direct", direct)

    @property
    def n_categories(self) -> int:
        return self.joint.shape[-1]

    @property
    def complete_table(self) -> np.ndarray:
        return self.joint.sum(axis=1) + self.direct

    @classmethod
    def completers_only(cls, table) -> "LongitudinalData":
        table = np.asarray(table, dtype=float)
        K = table.shape[-1]
        return cls(np.zeros((2, K, K)), np.zeros((2, K)), table)


LONGITUDINAL_PREFIX = ("alpha", "theta", "rho")


def longitudinal_chains(
    data: LongitudinalData,
    spec: LongitudinalModelSpec,
    mcmc: MCMCSettings,
    rng: np.random.Generator,
    rho_init: Optional[np.ndarray] = None,
):
    K = data.n_categories
    C = mcmc.n_chains
    init = np.zeros((C, K - 1 + 1 + K * K))
    pooled = data.complete_table.sum(axis=0) + data.partial.sum(axis=0)
    init[:, :K - 1] = _cutpoint_init(pooled, C, rng)
    init[:, K - 1] = rng.normal(0, 0.05, C)
    rho0 = np.full((K, K), 1.0 / K) if rho_init is None else np.asarray(rho_init, dtype=float)
    init[:, K:] = rho0.reshape(-1)[None]
    prior = np.array([spec.cutpoint_sd, spec.theta_mean, spec.theta_sd, spec.rho_concentration])
    out = np.empty((C, mcmc.n_keep, init.shape[1]))
    acc = _longitudinal_chains(
        np.repeat(data.joint[None], C, axis=0),
        np.repeat(data.direct[None], C, axis=0),
        np.repeat(data.partial[None], C, axis=0),
        init, mcmc.n_burn, mcmc.n_keep, _seeds(rng, C), prior, out,
    )
    return out, acc


def fit_longitudinal_model(
    data: LongitudinalData,
    spec: LongitudinalModelSpec = LongitudinalModelSpec(),
    mcmc: MCMCSettings = MCMCSettings(),
    rng: Optional[np.random.Generator] = None,
    rho_init: Optional[np.ndarray] = None,
) -> MCMCFit:
    """Posterior of the 90-day cumulative logit model informed by 30-day outcomes.

    With no partial patients this is the plain Bayesian proportional-odds
    analysis of the completers.
    """
    if mcmc.n_chains < 2:
        raise ValueError("convergence diagnostics need at least two chains")
    rng = rng if rng is not None else np.random.default_rng()
    draws, acc = longitudinal_chains(data, spec, mcmc, rng, rho_init)
    K = data.n_categories
    flat = draws.reshape(-1, draws.shape[-1])
    params = {
        "alpha": flat[:, :K - 1],
        "theta": flat[:, K - 1],
        "rho": flat[:, K:].reshape(-1, K, K),
    }
    theta = params["theta"]
    return MCMCFit(
        draws=PosteriorDraws(params, "ordinal-longitudinal"),
        prob_benefit=float(np.mean(theta > 0)),
        theta_mean=float(theta.mean()),
        theta_var=float(theta.var(ddof=1)),
        rhat=split_rhat(draws[:, :, K - 1]),
        acceptance=acc.mean(axis=0),
    )


def fit_ordinal_model(
    table,
    theta_sd: float = 10.0,
    cutpoint_sd: float = 10.0,
    mcmc: MCMCSettings = MCMCSettings(),
    rng: Optional[np.random.Generator] = None,
) -> MCMCFit:
    """Bayesian proportional-odds fit of an oriented (2, K) table without borrowing."""
    spec = LongitudinalModelSpec(theta_sd=theta_sd, cutpoint_sd=cutpoint_sd)
    return fit_longitudinal_model(LongitudinalData.completers_only(table), spec, mcmc, rng)


def cell_probabilities(alpha: np.ndarray, shift) -> np.ndarray:
    """Category probabilities for cutpoints ``alpha`` (D, K-1) and linear shift (D,)."""
    alpha = np.atleast_2d(alpha)
    shift = np.asarray(shift, dtype=float).reshape(-1, 1)
    F = expit(alpha + shift)
    D = F.shape[0]
    P = np.diff(np.concatenate([np.zeros((D, 1)), F, np.ones((D, 1))], axis=1), axis=1)
    return np.clip(P, 0.0, None) / np.clip(P, 0.0, None).sum(axis=1, keepdims=True)
