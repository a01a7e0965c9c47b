"""Information levels: nominal counts per endpoint, variance-ratio estimates,
borrowed observations and projected final event counts."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from .core import DomainError


class EndpointKind(str, Enum):
    CONTINUOUS = "continuous"
    DICHOTOMOUS = "dichotomous"
    TIME_TO_EVENT = "time_to_event"
    ORDINAL = "ordinal"
    COUNT = "count"


UNITS = {
    EndpointKind.CONTINUOUS: "patients",
    EndpointKind.DICHOTOMOUS: "patients",
    EndpointKind.ORDINAL: "patients",
    EndpointKind.TIME_TO_EVENT: "events",
    EndpointKind.COUNT: "exposure",
}

TO_BE_PROJECTED = None


@dataclass(frozen=True)
class InformationSpec:
    """How information is counted for one interim.

    ``final_count`` of ``None`` marks a final information level that must be
    projected first (time-to-event trials with fixed follow-up).
    """

    endpoint_kind: EndpointKind
    interim_count: float
    final_count: Optional[float] = TO_BE_PROJECTED
    units: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "endpoint_kind", EndpointKind(self.endpoint_kind))
        if self.interim_count < 0:
            raise DomainError("interim_count must be non-negative")
        if self.units is not None and self.units != UNITS[self.endpoint_kind]:
            raise DomainError(
                f"{self.endpoint_kind.value} information is counted in "
                f"{UNITS[self.endpoint_kind]}, not {self.units}"
            )
        if self.final_count is not None:
            if self.final_count <= 0:
                raise DomainError("final_count must be positive")
            if self.interim_count >= self.final_count:
                raise DomainError(
                    f"interim_count ({self.interim_count}) must be below final_count ({self.final_count})"
                )


def nominal_information(spec: InformationSpec) -> tuple[float, float]:
    if spec.final_count is None:
        raise DomainError("final information is marked to-be-projected; project it first")
    if spec.interim_count <= 0:
        raise DomainError("interim information must be positive")
    return float(spec.interim_count), float(spec.final_count)


def effective_information(
    reference_variance: float, target_variance: float, reference_information: float
) -> float:
    """Information of an analysis inferred from its variance relative to a reference.

    ``reference_variance / target_variance * reference_information``; an
    analysis that is more precise than the reference is credited with more
    information.
    """
    if not (reference_variance > 0 and target_variance > 0 and reference_information > 0):
        raise DomainError("variances and reference information must be positive")
    return reference_variance / target_variance * reference_information


class Borrowed(NamedTuple):
    value: float
    raw: float
    clamped: bool


def borrowed_observations(
    estimated_information: float, n: float, max_borrowed: Optional[float] = None
) -> Borrowed:
    """Observations borrowed from an external source, clamped to [0, max_borrowed]."""
    if estimated_information < 0:
        raise DomainError("estimated information must be non-negative")
    raw = float(estimated_information - n)
    upper = math.inf if max_borrowed is None else float(max_borrowed)
    value = min(max(raw, 0.0), upper)
    return Borrowed(value, raw, value != raw)


def clamp_longitudinal_information(estimated: float, n_complete: float, n_enrolled: float) -> float:
    return float(min(max(estimated, n_complete), n_enrolled))


class EventProjection(NamedTuple):
    expected: float
    rounded: int
    hazard: float
    used_fallback: bool


def project_final_events(
    interim_events: int,
    interim_exposure: float,
    entry_times,
    at_risk,
    follow_up_cap: float,
    analysis_time: float,
    n_future: int = 0,
    fallback_hazard: Optional[float] = None,
    hazard: Optional[float] = None,
) -> EventProjection:
    """Expected event count once every patient reaches the follow-up cap.

    A pooled exponential hazard is fitted to the interim data.  Each patient
    still event-free with follow-up outstanding contributes the probability of
    an event over the remaining time; each of ``n_future`` not-yet-enrolled
    patients contributes the probability of an event over the full cap.

    Args:
        interim_events: Events observed so far.
        interim_exposure: Total person-time observed so far.
        entry_times: Accrual times of the enrolled patients.
        at_risk: Boolean mask, True for patients without an event so far.
        follow_up_cap: Maximum follow-up per patient.
        analysis_time: Calendar time of the interim.
        n_future: Patients still to be enrolled before the final analysis.
        fallback_hazard: Design-assumed hazard used when no events are observed.
        hazard: Override for the fitted hazard (per-arm projection).

    Returns:
        ``EventProjection``; ``expected`` is unrounded and should be used as the
        final information, ``rounded`` is for reporting.
    """
    used_fallback = False
    if hazard is None:
        if interim_events >= 1:
            if interim_exposure <= 0:
                raise DomainError("interim exposure must be positive")
            hazard = interim_events / interim_exposure
        else:
            if fallback_hazard is None or fallback_hazard <= 0:
                raise DomainError("no interim events and no fallback hazard supplied")
            warnings.warn("no events at interim; projecting with the design-assumed hazard")
            hazard = float(fallback_hazard)
            used_fallback = True
    entry = np.asarray(entry_times, dtype=float)
    risk = np.asarray(at_risk, dtype=bool)
    followed = np.minimum(analysis_time - entry, follow_up_cap)
    remaining = np.where(risk, np.clip(follow_up_cap - followed, 0.0, None), 0.0)
    extra = float(np.sum(-np.expm1(-hazard * remaining)))
    extra += n_future * float(-np.expm1(-hazard * follow_up_cap))
    expected = interim_events + extra
    if extra > 0:
        rounded = max(int(round(expected)), interim_events + 1)
    else:
        rounded = int(interim_events)
    return EventProjection(expected, rounded, float(hazard), used_fallback)
