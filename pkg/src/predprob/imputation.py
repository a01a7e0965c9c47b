"""Predictive probabilities of an interim snapshot: imputed (Monte Carlo) and
approximate (closed form with nominal or estimated information)."""

from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

from .core import SuccessCriterion, approx_pp_bayes
from .snapshots import InterimState, Method, Snapshot, Target

MIN_IMPUTATIONS = 100
DEFAULT_IMPUTATIONS = 1000


class IPPResult(NamedTuple):
    pp: float
    mc_se: float
    n_imputations: int
    n_flagged: int


def imputed_pp(
    snapshot: Snapshot,
    criterion: SuccessCriterion,
    target: Target = Target.N_MAX,
    n_imputations: int = DEFAULT_IMPUTATIONS,
    rng: Optional[np.random.Generator] = None,
    state: Optional[InterimState] = None,
    settings=None,
) -> IPPResult:
    """Fraction of imputed completed trials whose final analysis succeeds.

    Unobserved outcomes of enrolled patients, and of future patients when the
    target is ``N_max``, are drawn from the posterior predictive; each
    completed dataset is then analysed as the final analysis would be.
    ``state`` reuses an interim fit (required for model-based snapshots to
    avoid refitting).
    """
    if n_imputations < MIN_IMPUTATIONS:
        raise ValueError(f"n_imputations must be at least {MIN_IMPUTATIONS}")
    rng = rng if rng is not None else np.random.default_rng()
    if state is None:
        state = snapshot.analyze(criterion, (Method.IPP,), rng, settings)
    ok, flagged = snapshot.impute_success(state, criterion, Target(target), n_imputations, rng, settings)
    pp = float(np.mean(ok))
    se = float(np.sqrt(max(pp * (1.0 - pp), 0.0) / n_imputations))
    return IPPResult(pp, se, n_imputations, int(np.sum(flagged)))


def approximate_pp(
    snapshot: Snapshot,
    state: InterimState,
    criterion: SuccessCriterion,
    target: Target = Target.N_MAX,
    method: Method = Method.NPP,
) -> tuple[float, float, float]:
    """Closed-form predictive probability; returns ``(pp, info_n, info_N)``.

    Without interim information the closed form reduces to the evidence
    itself; with no outstanding information it is the indicator of success.
    """
    info_n, info_N = snapshot.information(state, Method(method), Target(target))
    if info_n <= 0:
        return float(state.superiority), info_n, info_N
    if info_N <= info_n:
        return float(state.superiority > criterion.superiority), info_n, info_N
    pp = approx_pp_bayes(state.superiority, info_n / info_N, criterion.superiority)
    return float(pp), info_n, info_N
