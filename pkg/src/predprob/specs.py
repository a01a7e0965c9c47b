"""Design and scenario configuration with strict validation.

Configs are plain JSON objects.  Unknown keys are rejected so a typo never
silently falls back to a default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .core import CriterionKind, SuccessCriterion
from .mcmc import REFIT_MCMC, BorrowingModelSpec, LongitudinalModelSpec, MCMCSettings
from .snapshots import Method, ModelSettings

SCHEMA_VERSION = 1

ENDPOINTS = ("dichotomous", "time_to_event", "ordinal", "longitudinal", "borrowing")
MODEL_ENDPOINTS = ("longitudinal", "borrowing")

#: Artifact-chosen ordinal control distribution (best category first).
DEFAULT_ORDINAL_CONTROL = (0.35, 0.25, 0.15, 0.10, 0.10, 0.05)


class ConfigError(ValueError):
    """A configuration value or key is invalid."""


def default_transition(K: int = 6, diagonal: float = 0.6, decay: float = 0.5) -> np.ndarray:
    """Reverse transition matrix rho[i30, j90] = P(Y30 = i | Y90 = j).

    Each column keeps ``diagonal`` on i = j and spreads the rest over the
    other categories with weights ``decay ** |i - j|``.
    """
    rho = np.zeros((K, K))
    for j in range(K):
        w = np.array([decay ** abs(i - j) if i != j else 0.0 for i in range(K)])
        rho[:, j] = (1.0 - diagonal) * w / w.sum()
        rho[j, j] = diagonal
    return rho


def _check_keys(name: str, data: dict, allowed) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be an object")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(sorted(unknown))}")


def _from_dict(cls, name: str, data: dict):
    _check_keys(name, data, {f.name for f in dataclasses.fields(cls)})
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


@dataclass(frozen=True)
class FinalAnalysis:
    kind: str = "alpha_level"
    level: float = 0.025

    def __post_init__(self):
        try:
            self.criterion
        except ValueError as exc:
            raise ConfigError(f"final_analysis: {exc}") from None

    @property
    def criterion(self) -> SuccessCriterion:
        return SuccessCriterion(CriterionKind(self.kind), self.level)


@dataclass(frozen=True)
class DesignSpec:
    """Goldilocks design: interims at enrolment counts, success on PP_N, futility on PP_max.

    ``follow_up`` is the outcome readout delay (dichotomous, ordinal), the
    per-patient follow-up cap (time to event) or the final visit
    (longitudinal, borrowing), in the scenario's time unit.
    """

    endpoint: str
    n_max: int
    interims: tuple
    follow_up: float
    success_threshold: float = 0.90
    futility_threshold: float = 0.05
    final_analysis: FinalAnalysis = field(default_factory=FinalAnalysis)
    methods: tuple = ("npp", "ipp")
    n_imputations: int = 1000
    early_visit: Optional[float] = None
    events_bad: bool = True
    z_variance: str = "pooled"
    per_arm_projection: bool = False
    assumed_event_prob: Optional[float] = None
    mcmc: MCMCSettings = field(default_factory=MCMCSettings)
    refit_mcmc: MCMCSettings = REFIT_MCMC
    tau2_shape: float = 0.125
    tau2_scale: float = 0.00281
    tau2_parameterization: str = "shape_scale"
    mu_sd: float = 1.0
    cutpoint_sd: float = 10.0
    theta_sd: float = 10.0
    rho_concentration: float = 1.0 / 6.0

    def __post_init__(self):
        object.__setattr__(self, "interims", tuple(int(i) for i in self.interims))
        object.__setattr__(self, "methods", tuple(Method(m).value for m in self.methods))
        if isinstance(self.final_analysis, dict):
            object.__setattr__(
                self, "final_analysis", _from_dict(FinalAnalysis, "final_analysis", self.final_analysis)
            )
        for name in ("mcmc", "refit_mcmc"):
            v = getattr(self, name)
            if isinstance(v, dict):
                object.__setattr__(self, name, _from_dict(MCMCSettings, name, v))
        if self.endpoint not in ENDPOINTS:
            raise ConfigError(f"endpoint must be one of {ENDPOINTS}, got {self.endpoint!r}")
        if self.n_max < 2:
            raise ConfigError("n_max must be at least 2")
        if not self.interims:
            raise ConfigError("at least one interim is required")
        if any(b <= a for a, b in zip(self.interims, self.interims[1:])):
            raise ConfigError("interims must be strictly increasing")
        if self.interims[0] < 2 or self.interims[-1] >= self.n_max:
            raise ConfigError("interims must lie in [2, n_max)")
        for name in ("success_threshold", "futility_threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if self.follow_up <= 0:
            raise ConfigError("follow_up must be positive")
        if not self.methods or len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must be a non-empty list without repeats")
        if "epp" in self.methods and self.endpoint not in MODEL_ENDPOINTS:
            raise ConfigError("epp needs a model-based endpoint (longitudinal or borrowing)")
        if self.n_imputations < 100:
            raise ConfigError("n_imputations must be at least 100")
        if self.endpoint == "longitudinal":
            if self.early_visit is None or not 0 < self.early_visit < self.follow_up:
                raise ConfigError("longitudinal designs need 0 < early_visit < follow_up")
        if self.endpoint in MODEL_ENDPOINTS and self.final_analysis.kind != "posterior_threshold":
            raise ConfigError("model-based endpoints need a posterior_threshold final analysis")
        if self.z_variance not in ("pooled", "unpooled"):
            raise ConfigError("z_variance must be 'pooled' or 'unpooled'")
        if self.assumed_event_prob is not None and not 0 < self.assumed_event_prob < 1:
            raise ConfigError("assumed_event_prob must lie in (0, 1)")
        try:
            self.model_settings
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def criterion(self) -> SuccessCriterion:
        return self.final_analysis.criterion

    @property
    def model_settings(self) -> ModelSettings:
        return ModelSettings(
            mcmc=self.mcmc,
            refit=self.refit_mcmc,
            borrowing=BorrowingModelSpec(
                mu_sd=self.mu_sd, tau2_shape=self.tau2_shape, tau2_scale=self.tau2_scale,
                tau2_parameterization=self.tau2_parameterization, cutpoint_sd=self.cutpoint_sd,
            ),
            longitudinal=LongitudinalModelSpec(
                rho_concentration=self.rho_concentration, theta_sd=self.theta_sd,
                cutpoint_sd=self.cutpoint_sd,
            ),
            reference_theta_sd=self.theta_sd,
        )

    @classmethod
    def from_dict(cls, data: dict) -> "DesignSpec":
        return _from_dict(cls, "design", data)


@dataclass(frozen=True)
class ExternalCohort:
    """External cohort for borrowing; unset truths default to the trial's."""

    size_per_arm: int = 250
    control_probs: Optional[tuple] = None
    odds_ratio: Optional[float] = None

    def __post_init__(self):
        if self.size_per_arm < 1:
            raise ConfigError("external size_per_arm must be positive")
        if self.odds_ratio is not None and self.odds_ratio <= 0:
            raise ConfigError("external odds_ratio must be positive")


@dataclass(frozen=True)
class ScenarioSpec:
    """Data-generating truth.

    Dichotomous: ``control_rate`` and ``treatment_rate`` are event
    probabilities.  Time to event: ``control_event_prob`` is the event
    probability by the end of follow-up and ``hazard_ratio`` scales the
    exponential hazard.  Ordinal endpoints: ``control_probs`` (best category
    first) shifted by a proportional ``odds_ratio`` (> 1 favours treatment).
    """

    name: str = "scenario"
    accrual_rate: float = 1.0
    accrual: str = "deterministic"
    time_unit: str = "week"
    control_rate: Optional[float] = None
    treatment_rate: Optional[float] = None
    control_event_prob: Optional[float] = None
    hazard_ratio: Optional[float] = None
    control_probs: tuple = DEFAULT_ORDINAL_CONTROL
    odds_ratio: Optional[float] = None
    transition: Optional[tuple] = None
    external: Optional[ExternalCohort] = None

    def __post_init__(self):
        if isinstance(self.external, dict):
            object.__setattr__(self, "external", _from_dict(ExternalCohort, "external", self.external))
        object.__setattr__(self, "control_probs", tuple(float(x) for x in self.control_probs))
        if self.accrual_rate <= 0:
            raise ConfigError("accrual_rate must be positive")
        if self.accrual not in ("deterministic", "poisson"):
            raise ConfigError("accrual must be 'deterministic' or 'poisson'")
        for name in ("control_rate", "treatment_rate", "control_event_prob"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        for name in ("hazard_ratio", "odds_ratio"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive")
        p = np.asarray(self.control_probs)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ConfigError("control_probs must be a probability simplex")
        if self.transition is not None:
            t = np.asarray(self.transition, dtype=float)
            if t.shape != (p.size, p.size) or np.any(t < 0) or np.any(np.abs(t.sum(axis=0) - 1) > 1e-9):
                raise ConfigError("transition columns must be probability simplexes over 30-day categories")
        if self.external is not None:
            ext = self.external.control_probs
            if ext is not None:
                q = np.asarray(ext, dtype=float)
                if q.shape != p.shape or np.any(q < 0) or abs(q.sum() - 1.0) > 1e-9:
                    raise ConfigError("external control_probs must be a simplex like control_probs")

    def require(self, endpoint: str) -> None:
        """Check the fields an endpoint needs are present."""
        needs = {
            "dichotomous": ("control_rate", "treatment_rate"),
            "time_to_event": ("control_event_prob", "hazard_ratio"),
            "ordinal": ("odds_ratio",),
            "longitudinal": ("odds_ratio",),
            "borrowing": ("odds_ratio", "external"),
        }[endpoint]
        missing = [n for n in needs if getattr(self, n) is None]
        if missing:
            raise ConfigError(f"scenario {self.name!r} lacks {', '.join(missing)} for {endpoint}")
        if endpoint == "time_to_event" and not 0 < self.control_event_prob < 1:
            raise ConfigError("control_event_prob must lie strictly inside (0, 1)")

    @property
    def transition_matrix(self) -> np.ndarray:
        if self.transition is None:
            return default_transition(len(self.control_probs))
        return np.asarray(self.transition, dtype=float)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        return _from_dict(cls, "scenario", data)


@dataclass(frozen=True)
class Execution:
    n_sims: int = 100
    master_seed: int = 0
    parallelism: Optional[int] = None

    def __post_init__(self):
        if self.n_sims < 1:
            raise ConfigError("n_sims must be at least 1")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")
        if self.parallelism is not None and self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")


@dataclass(frozen=True)
class Output:
    directory: str = "results"
    full_precision: bool = False


@dataclass(frozen=True)
class RunConfig:
    design: DesignSpec
    scenarios: tuple
    execution: Execution = field(default_factory=Execution)
    output: Output = field(default_factory=Output)
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        _check_keys("config", data, ("schema_version", "design", "scenario", "execution", "output"))
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
        if "design" not in data or "scenario" not in data:
            raise ConfigError("config needs 'design' and 'scenario'")
        design = DesignSpec.from_dict(data["design"])
        raw = data["scenario"]
        raw = raw if isinstance(raw, list) else [raw]
        if not raw:
            raise ConfigError("scenario list is empty")
        scenarios = tuple(ScenarioSpec.from_dict(s) for s in raw)
        names = [s.name for s in scenarios]
        if len(set(names)) != len(names):
            raise ConfigError("scenario names must be unique")
        for s in scenarios:
            s.require(design.endpoint)
        execution = _from_dict(Execution, "execution", data.get("execution", {}))
        output = _from_dict(Output, "output", data.get("output", {}))
        return cls(design, scenarios, execution, output, version)

    def semantic_dict(self) -> dict:
        """Everything that determines results; output location and worker count excluded."""
        return {
            "schema_version": self.schema_version,
            "design": dataclasses.asdict(self.design),
            "scenarios": [dataclasses.asdict(s) for s in self.scenarios],
            "n_sims": self.execution.n_sims,
            "master_seed": self.execution.master_seed,
        }

    @property
    def hash(self) -> str:
        return config_hash(self.semantic_dict())

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON: {exc}") from None
        return cls.from_dict(data)


def config_hash(data: Any) -> str:
    """SHA-256 of the canonical JSON form; insensitive to whitespace and key order."""
    text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
