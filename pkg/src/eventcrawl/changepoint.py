"""Edit-frequency change point of a Wikipedia page history.

The revision history is bucketed into daily edit counts and a single
mean shift is located by least squares (at most one change).  The page
version live at that datetime is the one used to model the event.
"""

from __future__ import annotations

import json
import logging
from bisect import bisect_right
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from fractions import Fraction
from numbers import Rational
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from dateutil.parser import isoparse

log = logging.getLogger(__name__)

# Minimum relative SSE reduction for a split to count as a change point.
MIN_RELATIVE_GAIN = Fraction(1, 100)


class ChangePointError(ValueError):
    pass


class NoChangePoint(ChangePointError):
    """Raised when no split reduces the squared error meaningfully."""


@dataclass(frozen=True)
class Revision:
    revid: int
    timestamp: datetime


@dataclass(frozen=True)
class RevisionHistory:
    revisions: tuple[Revision, ...]
    page_title: str = ""

    def __post_init__(self):
        ts = [r.timestamp for r in self.revisions]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("revision timestamps must be non-decreasing")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, datetime]], page_title: str = ""):
        revs = sorted((Revision(int(r), _utc(t)) for r, t in pairs), key=lambda r: r.timestamp)
        return cls(tuple(revs), page_title)

    @classmethod
    def from_jsonl(cls, path: str | Path, page_title: str = "") -> "RevisionHistory":
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                pairs.append((rec["revid"], isoparse(rec["timestamp"])))
        return cls.from_pairs(pairs, page_title)

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.revisions:
                ts = r.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ")
                fh.write(json.dumps({"revid": r.revid, "timestamp": ts}) + "\n")

    def shifted(self, offset: timedelta) -> "RevisionHistory":
        return RevisionHistory(
            tuple(Revision(r.revid, r.timestamp + offset) for r in self.revisions),
            self.page_title,
        )


@dataclass(frozen=True)
class EditCurve:
    start: date
    day_index: tuple[int, ...]
    edits_per_day: tuple[int, ...]
    cumulative_fraction: tuple[float, ...]

    def __len__(self):
        return len(self.day_index)


class RevisionSource(Protocol):
    def history(self, page_title: str) -> RevisionHistory: ...


class MediaWikiRevisionSource:
    """Fetch revision ids and timestamps through the MediaWiki query API."""

    def __init__(self, api_url: str = "https://en.wikipedia.org/w/api.php", session=None,
                 timeout: float = 30.0):
        if session is None:
            import requests

            session = requests.Session()
        self.api_url = api_url
        self.session = session
        self.timeout = timeout

    def history(self, page_title: str) -> RevisionHistory:
        params = {
            "action": "query",
            "format": "json",
            "prop": "revisions",
            "titles": page_title,
            "rvprop": "ids|timestamp",
            "rvlimit": "max",
            "rvdir": "newer",
        }
        pairs = []
        while True:
            resp = self.session.get(self.api_url, params=params, timeout=self.timeout)
            resp.raise_for_status()
            data = resp.json()
            for page in data.get("query", {}).get("pages", {}).values():
                for rev in page.get("revisions", []):
                    pairs.append((rev["revid"], isoparse(rev["timestamp"])))
            if "continue" not in data:
                break
            params.update(data["continue"])
        return RevisionHistory.from_pairs(pairs, page_title)


def _utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def build_edit_curve(history: RevisionHistory) -> EditCurve:
    if not history.revisions:
        raise ChangePointError("no revisions")
    days = [r.timestamp.date() for r in history.revisions]
    start = days[0]
    n_days = (days[-1] - start).days + 1
    counts = [0] * n_days
    for d in days:
        counts[(d - start).days] += 1
    total = len(days)
    cumulative = []
    running = 0
    for c in counts:
        running += c
        cumulative.append(running / total)
    return EditCurve(start, tuple(range(n_days)), tuple(counts), tuple(cumulative))


def _exact(values: Sequence) -> list:
    out = []
    for v in values:
        if isinstance(v, Rational):
            out.append(v)
        else:
            fv = Fraction(v)
            out.append(fv.numerator if fv.denominator == 1 else fv)
    return out


def best_split(values: Sequence) -> tuple[int, Fraction, Fraction]:
    """Least-squares single split of ``values``.

    Returns ``(k, split_sse, total_sse)`` where ``k`` is the first index of
    the second segment.  Arithmetic is exact, so ties resolve to the
    smallest ``k``.
    """
    xs = _exact(values)
    n = len(xs)
    if n < 2:
        raise ChangePointError("series too short for a change point")
    total = sum(xs)
    sq = sum(x * x for x in xs)
    # Minimizing the split SSE is maximizing A^2/k + B^2/(n-k).
    best_k, best_num, best_den = 0, None, 1
    left = 0
    for k in range(1, n):
        left += xs[k - 1]
        right = total - left
        num = left * left * (n - k) + right * right * k
        den = k * (n - k)
        if best_num is None or num * best_den > best_num * den:
            best_k, best_num, best_den = k, num, den
    total_sse = Fraction(sq) - Fraction(total * total, 1) / n
    split_sse = Fraction(sq) - Fraction(best_num) / best_den
    return best_k, split_sse, total_sse


def detect_change_point(curve: EditCurve | Sequence) -> int:
    """Day offset of the first day after the change in edit frequency."""
    counts = curve.edits_per_day if isinstance(curve, EditCurve) else curve
    if len(counts) < 2:
        raise ChangePointError("curve too short: need at least 2 days")
    k, split_sse, total_sse = best_split(counts)
    if total_sse == 0 or (total_sse - split_sse) < MIN_RELATIVE_GAIN * total_sse:
        raise NoChangePoint("no significant change point")
    return k


def change_point_datetime(history: RevisionHistory) -> datetime:
    curve = build_edit_curve(history)
    offset = detect_change_point(curve)
    day = curve.start + timedelta(days=offset)
    dt_cp = datetime(day.year, day.month, day.day, tzinfo=timezone.utc)
    log.info("change point for %r at day %d (%s)", history.page_title, offset, dt_cp.date())
    return dt_cp


def select_version(history: RevisionHistory, dt_cp: datetime) -> int:
    """Id of the latest revision at or before ``dt_cp``."""
    if not history.revisions:
        raise ChangePointError("no revisions")
    dt_cp = _utc(dt_cp)
    stamps = [r.timestamp for r in history.revisions]
    i = bisect_right(stamps, dt_cp)
    if i == 0:
        raise ChangePointError(f"{dt_cp.isoformat()} precedes the first revision")
    return history.revisions[i - 1].revid
