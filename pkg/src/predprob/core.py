"""Closed-form predictive probabilities under the canonical joint distribution.

The approximation treats the interim and final test statistics as bivariate
normal with correlation sqrt(I_n / I_N) and a flat prior on the standardized
effect.  Everything here is a pure function of its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
from scipy.special import ndtr, ndtri

#: Probabilities are clamped into [PROB_EPS, 1 - PROB_EPS] before quantile transforms.
PROB_EPS = 1e-12

ArrayLike = Union[float, np.ndarray]


class DomainError(ValueError):
    """An argument lies outside the domain where the formulas are defined."""


def norm_cdf(x: ArrayLike) -> ArrayLike:
    return ndtr(x)


def norm_ppf(p: ArrayLike) -> ArrayLike:
    return ndtri(p)


def _scalar_or_array(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _prob(name: str, value) -> np.ndarray:
    v = np.asarray(value, dtype=float)
    if np.any(~np.isfinite(v)) or np.any(v < 0.0) or np.any(v > 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
    return np.clip(v, PROB_EPS, 1.0 - PROB_EPS)


def _target(value) -> np.ndarray:
    # not clamped: ndtri is exact deep in the tails, which keeps inversion a true inverse
    v = np.asarray(value, dtype=float)
    if np.any(~np.isfinite(v)) or np.any(v < 0.0) or np.any(v > 1.0):
        raise DomainError(f"target_pp must lie in [0, 1], got {value!r}")
    return v


def _open_unit(name: str, value) -> np.ndarray:
    v = np.asarray(value, dtype=float)
    if np.any(~np.isfinite(v)) or np.any(v <= 0.0) or np.any(v >= 1.0):
        raise DomainError(f"{name} must lie strictly inside (0, 1), got {value!r}")
    return v


def _fraction(r) -> np.ndarray:
    if isinstance(r, InformationFraction):
        return np.asarray(r.r)
    return _open_unit("r", r)


@dataclass(frozen=True)
class InformationFraction:
    """Interim information over final information, strictly inside (0, 1)."""

    r: float

    def __post_init__(self):
        _open_unit("r", self.r)

    @classmethod
    def from_information(cls, info_n: float, info_N: float) -> "InformationFraction":
        if not (info_n > 0 and info_N > info_n):
            raise DomainError(
                f"need 0 < info_n < info_N, got info_n={info_n}, info_N={info_N}"
            )
        return cls(info_n / info_N)

    def __float__(self) -> float:
        return float(self.r)


class EvidenceKind(str, Enum):
    FREQUENTIST = "frequentist"
    BAYESIAN = "bayesian"


@dataclass(frozen=True)
class InterimEvidence:
    """Strength of evidence at an interim.

    ``value`` is a one-sided p-value for frequentist evidence and the
    posterior probability of superiority for Bayesian evidence.  Exact 0 or 1
    is accepted and clamped when transformed.
    """

    kind: EvidenceKind
    value: float

    def __post_init__(self):
        object.__setattr__(self, "kind", EvidenceKind(self.kind))
        _prob("evidence", self.value)

    @property
    def superiority(self) -> float:
        """Probability-scale evidence of benefit (1 - p or P_n)."""
        if self.kind is EvidenceKind.FREQUENTIST:
            return 1.0 - self.value
        return self.value


class CriterionKind(str, Enum):
    ALPHA_LEVEL = "alpha_level"
    POSTERIOR_THRESHOLD = "posterior_threshold"


@dataclass(frozen=True)
class SuccessCriterion:
    kind: CriterionKind
    level: float

    def __post_init__(self):
        object.__setattr__(self, "kind", CriterionKind(self.kind))
        _open_unit("success level", self.level)

    @property
    def superiority(self) -> float:
        """Probability-scale bar the final analysis must clear (1 - alpha or eta)."""
        if self.kind is CriterionKind.ALPHA_LEVEL:
            return 1.0 - self.level
        return self.level


@dataclass(frozen=True)
class CanonicalState:
    z_n: float
    info_n: float
    info_N: float

    def __post_init__(self):
        if not (self.info_n > 0 and self.info_N > self.info_n):
            raise DomainError(
                f"need 0 < info_n < info_N, got {self.info_n}, {self.info_N}"
            )
        if not np.isfinite(self.z_n):
            raise DomainError("z_n must be finite")

    @property
    def fraction(self) -> InformationFraction:
        return InformationFraction(self.info_n / self.info_N)


def _pp_from_quantiles(z_obs, z_bar, r):
    return ndtr((z_obs - z_bar * np.sqrt(r)) / np.sqrt(1.0 - r))


def approx_pp(p_n: ArrayLike, r, alpha: ArrayLike) -> ArrayLike:
    """Approximate predictive probability from a one-sided interim p-value.

    Args:
        p_n: One-sided p-value at the interim.
        r: Information fraction I_n / I_N, strictly inside (0, 1).
        alpha: One-sided level of the final test.

    Returns:
        Probability that the final analysis at information I_N rejects H0.
    """
    p = _prob("p_n", p_n)
    rr = _fraction(r)
    a = _open_unit("alpha", alpha)
    a = np.clip(a, PROB_EPS, 1.0 - PROB_EPS)
    return _scalar_or_array(_pp_from_quantiles(ndtri(1.0 - p), ndtri(1.0 - a), rr))


def approx_pp_bayes(post_n: ArrayLike, r, eta: ArrayLike) -> ArrayLike:
    """Approximate predictive probability from a posterior probability of superiority."""
    P = _prob("posterior probability", post_n)
    rr = _fraction(r)
    e = _open_unit("eta", eta)
    return _scalar_or_array(_pp_from_quantiles(ndtri(P), ndtri(e), rr))


def predictive_probability(
    evidence: InterimEvidence, r, criterion: SuccessCriterion
) -> float:
    """Dispatch on evidence/criterion kinds; mixed kinds work on the probability scale."""
    return approx_pp_bayes(evidence.superiority, r, criterion.superiority)


def invert_pp(target_pp: ArrayLike, r, alpha: ArrayLike) -> ArrayLike:
    """Interim p-value at which the approximate predictive probability equals ``target_pp``."""
    t = _target(target_pp)
    rr = _fraction(r)
    a = _open_unit("alpha", alpha)
    z = ndtri(t) * np.sqrt(1.0 - rr) + ndtri(1.0 - a) * np.sqrt(rr)
    # 1 - Phi(z) written as Phi(-z) keeps precision in the upper tail
    return _scalar_or_array(ndtr(-z))


def invert_pp_bayes(target_pp: ArrayLike, r, eta: ArrayLike) -> ArrayLike:
    """Posterior probability of superiority at which the Bayesian form equals ``target_pp``."""
    t = _target(target_pp)
    rr = _fraction(r)
    e = _open_unit("eta", eta)
    return _scalar_or_array(ndtr(ndtri(t) * np.sqrt(1.0 - rr) + ndtri(e) * np.sqrt(rr)))


def futility_onset(threshold: float, alpha: float) -> float:
    """Information fraction beyond which equivocal data (p = 0.5) trigger futility.

    Solves approx_pp(0.5, r, alpha) = threshold for r.
    """
    _open_unit("threshold", threshold)
    _open_unit("alpha", alpha)
    if threshold >= 0.5:
        raise DomainError(
            f"futility threshold must be below 0.5 (equivocal data never exceed PP=0.5), got {threshold}"
        )
    if alpha >= 0.5:
        raise DomainError(f"alpha must be below 0.5, got {alpha}")
    q = float(ndtri(1.0 - threshold) / ndtri(1.0 - alpha))
    return q * q / (1.0 + q * q)


def posterior_given_interim(state: CanonicalState) -> tuple[float, float]:
    """Flat-prior posterior mean and variance of the standardized effect."""
    return state.z_n / np.sqrt(state.info_n), 1.0 / state.info_n


def predictive_of_remaining(state: CanonicalState) -> tuple[float, float]:
    """Predictive mean and variance of the statistic from the outstanding data."""
    ratio = (state.info_N - state.info_n) / state.info_n
    return state.z_n * np.sqrt(ratio), state.info_N / state.info_n


def combine_statistics(z_n, z_rest, info_n: float, info_N: float):
    """Final statistic from the interim statistic and the independent remainder."""
    return (np.asarray(z_n) * np.sqrt(info_n) + np.asarray(z_rest) * np.sqrt(info_N - info_n)) / np.sqrt(info_N)
