"""Conjugate posterior samplers used to impute unobserved outcomes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as beta_dist

from .analyses import DichotomousData, OrdinalData, SurvivalData


@dataclass
class PosteriorDraws:
    """Posterior draws keyed by parameter name; the leading axis indexes draws."""

    params: dict
    model: str

    def __post_init__(self):
        sizes = {np.shape(v)[0] for v in self.params.values()}
        if len(sizes) != 1:
            raise ValueError("all parameters need the same number of draws")
        if sizes.pop() < 1:
            raise ValueError("need at least one draw")
        for k, v in self.params.items():
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite draws for {k}")

    @property
    def n_draws(self) -> int:
        return int(np.shape(next(iter(self.params.values())))[0])

    def __getitem__(self, key):
        return self.params[key]


def sample_posterior_dichotomous(
    data: DichotomousData, draws: int, rng: np.random.Generator, prior=(1.0, 1.0)
) -> PosteriorDraws:
    """Independent Beta posteriors for the event probability in each arm.

    Draws use the inverse CDF, so datasets sampled with the same generator
    state are coupled monotonically in their event counts.
    """
    a, b = prior
    u = rng.random((2, draws))
    pc = beta_dist.ppf(u[0], a + data.events_control, b + data.n_control - data.events_control)
    pt = beta_dist.ppf(u[1], a + data.events_treatment, b + data.n_treatment - data.events_treatment)
    return PosteriorDraws({"control": pc, "treatment": pt}, "beta-binomial")


def sample_posterior_tte(
    data: SurvivalData, draws: int, rng: np.random.Generator, prior=(0.001, 0.001)
) -> PosteriorDraws:
    """Gamma(shape + events, rate + exposure) posteriors for exponential hazards."""
    shape, rate = prior
    out = {}
    for arm, name in ((0, "control"), (1, "treatment")):
        d, x = data.arm_summary(arm)
        out[name] = rng.gamma(shape + d, 1.0 / (rate + x), size=draws)
    return PosteriorDraws(out, "exponential-gamma")


def sample_posterior_ordinal(
    data: OrdinalData, draws: int, rng: np.random.Generator, concentration: float = 1.0 / 6.0
) -> PosteriorDraws:
    """Dirichlet posteriors for the category probabilities of each arm."""
    conc = np.broadcast_to(np.asarray(concentration, dtype=float), (data.n_categories,))
    out = {}
    for arm, name in ((0, "control"), (1, "treatment")):
        out[name] = rng.dirichlet(conc + data.counts[arm], size=draws)
    return PosteriorDraws(out, "dirichlet-multinomial")
