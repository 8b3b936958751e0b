"""Temporal relevance of a resource datetime and the aggregate score.

Resources dated inside ``[dt_e, dt_cp]`` score 1, anything before the
event scores 0, and after ``dt_cp`` the score halves every ``delta_t``
(a quarter of the event-to-change-point span) until the grace period
runs out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from itertools import combinations
from statistics import fmean
from typing import Sequence

from .content import split_schedule

LN2 = math.log(2)


class NoGraceData(ValueError):
    """Not enough dated references to derive a grace period."""


@dataclass(frozen=True)
class ReferenceEntry:
    uri: str
    cited_datetime: datetime | None = None
    archived_datetime: datetime | None = None

    def to_json(self) -> dict:
        return {
            "uri": self.uri,
            "cited_datetime": _iso(self.cited_datetime),
            "archived_datetime": _iso(self.archived_datetime),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ReferenceEntry":
        from dateutil.parser import isoparse

        return cls(
            d["uri"],
            isoparse(d["cited_datetime"]) if d.get("cited_datetime") else None,
            isoparse(d["archived_datetime"]) if d.get("archived_datetime") else None,
        )


def _iso(dt: datetime | None) -> str | None:
    return None if dt is None else dt.isoformat()


@dataclass(frozen=True)
class TemporalParams:
    dt_e: datetime
    dt_cp: datetime
    grace: timedelta
    cutoff: bool = True

    def __post_init__(self):
        if not self.dt_e < self.dt_cp:
            raise ValueError("event datetime must precede the change point")
        if self.grace < timedelta(0):
            raise ValueError("grace period must be non-negative")

    @property
    def delta_t(self) -> timedelta:
        return (self.dt_cp - self.dt_e) / 4


@dataclass(frozen=True)
class RelevanceScores:
    r_cont: float
    r_temp: float
    r_aggr: float

    @classmethod
    def combine(cls, r_cont: float, r_temp: float, alpha: float, beta: float) -> "RelevanceScores":
        return cls(r_cont, r_temp, aggregate(r_cont, r_temp, alpha, beta))


def temporal_score(dt_r: datetime, params: TemporalParams) -> float:
    if dt_r < params.dt_e:
        return 0.0
    if dt_r <= params.dt_cp:
        return 1.0
    lag = dt_r - params.dt_cp
    if params.cutoff and lag > params.grace:
        return 0.0
    # exp(-(ln 2 / delta_t) * lag), with the ratio taken first so that a lag
    # of exactly one delta_t gives exactly one half
    return math.exp(-LN2 * (lag / params.delta_t))


def grace_period_archive(refs: Sequence[ReferenceEntry]) -> timedelta:
    """Mean delay between a reference's cited date and its archival date."""
    gaps = [
        max(r.archived_datetime - r.cited_datetime, timedelta(0))
        for r in refs
        if r.cited_datetime is not None and r.archived_datetime is not None
    ]
    if not gaps:
        raise NoGraceData("no reference has both a cited and an archived datetime")
    return sum(gaps, timedelta(0)) / len(gaps)


def grace_period_live(refs: Sequence[ReferenceEntry]) -> timedelta:
    """Mean absolute pairwise distance between cited reference datetimes."""
    dated = [r.cited_datetime for r in refs if r.cited_datetime is not None]
    if len(dated) < 2:
        raise NoGraceData("need at least 2 references with a cited datetime")
    pairs = [abs(a - b) for a, b in combinations(dated, 2)]
    return sum(pairs, timedelta(0)) / len(pairs)


def temporal_threshold(refs: Sequence[ReferenceEntry], repeats: int, sample_fraction: float,
                       params: TemporalParams, rng_seed) -> float:
    if not refs:
        raise ValueError("no references")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    means = []
    for sample in split_schedule(len(refs), sample_fraction, repeats, rng_seed):
        scores = [
            temporal_score(refs[i].cited_datetime, params)
            for i in sample
            if refs[i].cited_datetime is not None
        ]
        if scores:
            means.append(fmean(scores))
    if not means:
        raise ValueError("no sampled reference carries a datetime")
    return fmean(means)


def aggregate(r_cont: float, r_temp: float, alpha: float, beta: float) -> float:
    if alpha < 0 or beta < 0:
        raise ValueError("weights must be non-negative")
    return alpha * r_cont + beta * r_temp


def aggregate_threshold(th_cont: float, th_temp: float, alpha: float, beta: float) -> float:
    return aggregate(th_cont, th_temp, alpha, beta)
