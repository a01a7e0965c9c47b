"""Shadow SHINE re-analysis: published interim summaries and the closed form.

The four interims of the shadow analysis are embedded below.  The direct
closed-form value uses r = n / 1400 and a one-sided alpha of 0.025; the trial
stopped for futility when PP_max < 0.05 and for success when PP_N > 0.99.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import approx_pp

N_MAX = 1400
ALPHA = 0.025
FUTILITY = 0.05
SUCCESS = 0.99
NEAR_FUTILITY_MARGIN = 0.05


@dataclass(frozen=True)
class ShineInterim:
    index: int
    current_N: int
    n: int
    treatment_rate: float
    control_rate: float
    p_n: float
    published_ipp: float
    published_app: float


INTERIMS = (
    ShineInterim(1, 498, 432, 0.264, 0.244, 0.3535, 0.194, 0.182),
    ShineInterim(2, 579, 515, 0.256, 0.221, 0.2058, 0.372, 0.349),
    ShineInterim(3, 700, 621, 0.250, 0.232, 0.3372, 0.125, 0.129),
    ShineInterim(4, 800, 715, 0.231, 0.228, 0.4994, 0.028, 0.026),
)


def _decision(pp_max: float) -> str:
    return "futility" if pp_max < FUTILITY else "continue"


def shine_table(n_max: int = N_MAX, alpha: float = ALPHA) -> list[dict]:
    """One row per interim: inputs, direct PP_max, published values and decisions."""
    rows = []
    for it in INTERIMS:
        direct = float(approx_pp(it.p_n, it.n / n_max, alpha))
        rows.append({
            "interim": it.index,
            "N": it.current_N,
            "n": it.n,
            "treatment_rate": it.treatment_rate,
            "control_rate": it.control_rate,
            "p_n": it.p_n,
            "r": it.n / n_max,
            "direct_app": direct,
            "published_app": it.published_app,
            "published_ipp": it.published_ipp,
            "abs_diff": abs(direct - it.published_app),
            "direct_decision": _decision(direct),
            "published_decision": _decision(it.published_app),
            "near_futility": direct < FUTILITY + NEAR_FUTILITY_MARGIN,
        })
    return rows
