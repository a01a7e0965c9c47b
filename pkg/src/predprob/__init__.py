"""Approximate and imputed predictive probabilities for adaptive trial monitoring."""

from .core import (
    CanonicalState,
    DomainError,
    InformationFraction,
    InterimEvidence,
    SuccessCriterion,
    approx_pp,
    approx_pp_bayes,
    futility_onset,
    invert_pp,
    invert_pp_bayes,
    predictive_probability,
)
from .imputation import approximate_pp, imputed_pp
from .snapshots import Method, Target
from .specs import DesignSpec, RunConfig, ScenarioSpec
from .simulate import run_batch, simulate_trial, summarize

__version__ = "0.1.0"

__all__ = [
    "CanonicalState",
    "DomainError",
    "InformationFraction",
    "InterimEvidence",
    "SuccessCriterion",
    "approx_pp",
    "approx_pp_bayes",
    "futility_onset",
    "invert_pp",
    "invert_pp_bayes",
    "predictive_probability",
    "approximate_pp",
    "imputed_pp",
    "Method",
    "Target",
    "DesignSpec",
    "RunConfig",
    "ScenarioSpec",
    "run_batch",
    "simulate_trial",
    "summarize",
]
