import numpy as np
import pytest
from scipy import stats

from predprob.analyses import OrdinalData, prop_odds_test
from predprob.mcmc import (
    BorrowingModelSpec,
    LongitudinalData,
    LongitudinalModelSpec,
    MCMCSettings,
    borrowing_prob_benefit_batch,
    cell_probabilities,
    fit_borrowing_model,
    fit_longitudinal_model,
    fit_ordinal_model,
    split_rhat,
)
from predprob.simulate import shift_odds

PC = np.array([0.35, 0.25, 0.15, 0.10, 0.10, 0.05])
SBC_MCMC = MCMCSettings(n_chains=2, n_burn=400, n_keep=500)
SBC_REPS = 200
SBC_KEEP = 99


def table(rng, n, pc, odds_ratio):
    return np.stack([rng.multinomial(n, pc), rng.multinomial(n, shift_odds(pc, odds_ratio))])


def rank_of(truth, draws):
    idx = np.linspace(0, draws.size - 1, SBC_KEEP).round().astype(int)
    return int(np.sum(draws[idx] < truth))


def sbc_pvalue(ranks, bins=5):
    counts = np.histogram(ranks, bins=bins, range=(0, SBC_KEEP + 1))[0]
    return stats.chisquare(counts).pvalue


def prior_cutpoints(rng, sd, K=6):
    # ordered N(0, sd^2) prior = sorted iid normals
    return np.sort(rng.normal(0, sd, K - 1))


def sample_table(rng, alpha, shifts, sizes):
    P = cell_probabilities(np.tile(alpha, (len(shifts), 1)), np.asarray(shifts))
    return np.stack([rng.multinomial(n, p) for n, p in zip(sizes, P)])


def test_split_rhat():
    rng = np.random.default_rng(0)
    assert split_rhat(rng.normal(size=(2, 2000))) < 1.01
    bad = np.stack([rng.normal(size=2000), rng.normal(3, 1, size=2000)])
    assert split_rhat(bad) > 1.5


def test_cell_probabilities_sum_to_one():
    P = cell_probabilities(np.array([[-1.0, 0.0, 0.5, 1.0, 2.0]]), [0.3])
    assert P.shape == (1, 6) and P.sum() == pytest.approx(1.0)


def test_ordinal_fit_matches_mle():
    rng = np.random.default_rng(1)
    tab = table(rng, 400, PC, 1.5)
    fit = fit_ordinal_model(tab, mcmc=MCMCSettings(), rng=rng)
    mle = prop_odds_test(OrdinalData(tab))
    assert fit.rhat < 1.05
    assert fit.theta_mean == pytest.approx(mle.log_or, abs=0.05)
    assert np.sqrt(fit.theta_var) == pytest.approx(mle.se, rel=0.15)
    assert fit.prob_benefit == pytest.approx(stats.norm.cdf(mle.z), abs=0.03)


def test_ordinal_sbc():
    rng = np.random.default_rng(2)
    ranks = []
    for _ in range(SBC_REPS):
        alpha = prior_cutpoints(rng, 2.0)
        theta = rng.normal(0, 1.0)
        tab = sample_table(rng, alpha, [0.0, theta], [80, 80])
        fit = fit_ordinal_model(tab, theta_sd=1.0, cutpoint_sd=2.0, mcmc=SBC_MCMC, rng=rng)
        ranks.append(rank_of(theta, fit.draws["theta"]))
    assert sbc_pvalue(ranks) > 0.001


def longitudinal_sample(rng, alpha, theta, rho, n_complete, n_partial):
    data_joint = np.zeros((2, 6, 6))
    partial = np.zeros((2, 6))
    for x in (0, 1):
        p90 = cell_probabilities(alpha[None], [theta * x])[0]
        y90 = rng.choice(6, size=n_complete + n_partial, p=p90)
        y30 = np.array([rng.choice(6, p=rho[:, j]) for j in y90])
        np.add.at(data_joint[x], (y30[:n_complete], y90[:n_complete]), 1)
        np.add.at(partial[x], y30[n_complete:], 1)
    return LongitudinalData(data_joint, partial)


def test_longitudinal_sbc():
    rng = np.random.default_rng(3)
    spec = LongitudinalModelSpec(rho_concentration=1.0, theta_sd=1.0, cutpoint_sd=2.0)
    ranks = []
    for _ in range(SBC_REPS):
        alpha = prior_cutpoints(rng, 2.0)
        theta = rng.normal(0, 1.0)
        rho = rng.dirichlet(np.ones(6), size=6).T
        data = longitudinal_sample(rng, alpha, theta, rho, 60, 30)
        fit = fit_longitudinal_model(data, spec, SBC_MCMC, rng)
        ranks.append(rank_of(theta, fit.draws["theta"]))
    assert sbc_pvalue(ranks) > 0.001


def test_borrowing_sbc():
    rng = np.random.default_rng(4)
    spec = BorrowingModelSpec(mu_sd=0.5, tau2_shape=3.0, tau2_scale=0.5, cutpoint_sd=2.0, beta_sd=0.5)
    ranks = []
    for _ in range(SBC_REPS):
        alpha = prior_cutpoints(rng, 2.0)
        beta = rng.normal(0, 0.5)
        mu = rng.normal(0, 0.5)
        tau2 = spec.sample_tau2_prior(1, rng)[0]
        th = rng.normal(mu, np.sqrt(tau2), 2)
        trial = sample_table(rng, alpha, [0.0, th[0]], [80, 80])
        ext = sample_table(rng, alpha, [beta, beta + th[1]], [80, 80])
        fit = fit_borrowing_model(OrdinalData(trial), OrdinalData(ext), spec, SBC_MCMC, rng)
        ranks.append(rank_of(th[0], fit.draws["theta0"]))
    assert sbc_pvalue(ranks) > 0.001


def test_tau2_prior_central_value():
    spec = BorrowingModelSpec()
    draws = spec.sample_tau2_prior(400_000, np.random.default_rng(5))
    prec = 1 / draws
    # 1/tau2 ~ Gamma(shape, rate=scale): mean precision shape/scale, tau of 0.15 at that precision
    want = spec.tau2_shape / spec.tau2_scale
    assert abs(prec.mean() - want) < 3 * prec.std() / np.sqrt(prec.size)
    assert 1 / np.sqrt(want) == pytest.approx(0.15, abs=1e-3)


def test_borrowing_shrinks_posterior_sd():
    rng = np.random.default_rng(6)
    trial = table(rng, 250, PC, 1.4)
    ext = table(rng, 250, PC, 1.4)
    fit = fit_borrowing_model(OrdinalData(trial), OrdinalData(ext), rng=rng)
    alone = fit_ordinal_model(trial, rng=rng)
    assert fit.rhat < 1.05
    assert fit.theta_var < alone.theta_var


def test_dynamic_borrowing_attenuates_under_conflict():
    rng = np.random.default_rng(7)
    trial = table(rng, 250, PC, 1.6)
    ext = table(rng, 250, PC, 0.7)
    alone = fit_ordinal_model(trial, rng=rng).theta_mean
    dynamic = fit_borrowing_model(OrdinalData(trial), OrdinalData(ext), rng=rng).theta_mean
    fixed = fit_borrowing_model(OrdinalData(trial), OrdinalData(ext),
                                BorrowingModelSpec(fixed_tau2=0.01), rng=rng).theta_mean
    assert abs(dynamic - alone) < abs(fixed - alone)


def test_borrowing_batch_probability():
    rng = np.random.default_rng(8)
    trial = table(rng, 250, PC, 1.4)
    ext = table(rng, 250, PC, 1.4)
    probs = borrowing_prob_benefit_batch(np.stack([trial, trial[::-1]]), ext, BorrowingModelSpec(),
                                         MCMCSettings(2, 300, 300), rng)
    assert probs[0] > 0.5 > probs[1]


def test_longitudinal_diagonal_transitions_copy_early_category():
    rng = np.random.default_rng(9)
    rho = np.eye(6)
    alpha = np.array([-1.0, -0.3, 0.3, 0.9, 1.8])
    data = longitudinal_sample(rng, alpha, 0.3, rho, 150, 60)
    fit = fit_longitudinal_model(data, LongitudinalModelSpec(), MCMCSettings(), rng,
                                 rho_init=np.eye(6) * 0.999 + 0.001 / 6)
    r = fit.draws["rho"].mean(axis=0)
    # observed transitions are exactly diagonal, so off-diagonal mass is prior-only
    assert np.all(np.diag(r)[data.joint.sum(axis=(0, 1)) > 0] > 0.9)


def test_longitudinal_uninformative_transitions_match_completers():
    rng = np.random.default_rng(10)
    rho = np.full((6, 6), 1 / 6)
    alpha = np.array([-0.6, 0.1, 0.6, 1.1, 2.0])
    data = longitudinal_sample(rng, alpha, 0.3, rho, 250, 100)
    full = fit_longitudinal_model(data, LongitudinalModelSpec(), MCMCSettings(), rng)
    alone = fit_ordinal_model(data.complete_table, mcmc=MCMCSettings(), rng=rng)
    assert abs(full.prob_benefit - alone.prob_benefit) < 0.05


def test_longitudinal_informative_transitions_shrink_sd():
    from predprob.specs import default_transition

    rng = np.random.default_rng(11)
    alpha = np.array([-0.6, 0.1, 0.6, 1.1, 2.0])
    data = longitudinal_sample(rng, alpha, 0.3, default_transition(), 320, 120)
    full = fit_longitudinal_model(data, LongitudinalModelSpec(), MCMCSettings(), rng)
    alone = fit_ordinal_model(data.complete_table, mcmc=MCMCSettings(), rng=rng)
    assert full.theta_var <= alone.theta_var


def test_chain_count_validation():
    with pytest.raises(ValueError):
        fit_ordinal_model(np.ones((2, 6)), mcmc=MCMCSettings(n_chains=1))
