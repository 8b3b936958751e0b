"""Analyses over persisted collections, emitted as plot-ready tables."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .crawler import Collection
from .urls import normalize_uri


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class DepthRow:
    depth: int
    total_crawled: int
    total_relevant: int
    dismissed: int

    @property
    def fraction_relevant(self) -> float:
        return self.total_relevant / self.total_crawled if self.total_crawled else 0.0


def depth_histogram(collection: Collection, max_depth: int | None = None) -> list[DepthRow]:
    """Crawled, relevant and dismissed counts per depth 0..max_depth.

    ``total_crawled`` counts non-dismissed records; dismissed records are
    reported separately.
    """
    if max_depth is None:
        max_depth = max([collection.event.max_depth] + [r.depth for r in collection.records])
    crawled, relevant, dismissed = Counter(), Counter(), Counter()
    for r in collection.records:
        if r.dismissed:
            dismissed[r.depth] += 1
        else:
            crawled[r.depth] += 1
            relevant[r.depth] += r.accepted
    return [DepthRow(d, crawled[d], relevant[d], dismissed[d]) for d in range(max_depth + 1)]


def accumulated_relevance(collection: Collection, axis: str = "documents",
                          subset: str = "all") -> list[tuple[float, float]]:
    """Running sum of R_aggr by elapsed seconds or by document count.

    Dismissed records carry no score and are skipped.
    """
    if axis not in ("time", "documents"):
        raise ReportError(f"axis must be time or documents, not {axis!r}")
    if subset not in ("relevant", "all"):
        raise ReportError(f"subset must be relevant or all, not {subset!r}")
    recs = [r for r in collection.records if r.scores is not None and not r.dismissed]
    if subset == "relevant":
        recs = [r for r in recs if r.accepted]
    if axis == "time":
        recs = sorted(recs, key=lambda r: (r.elapsed, r.seq))
    else:
        recs = sorted(recs, key=lambda r: r.seq)
    series, total = [], 0.0
    for i, r in enumerate(recs, 1):
        total += r.r_aggr
        x = r.elapsed.total_seconds() if axis == "time" else float(i)
        series.append((x, total))
    return series


def archive_contributions(collection: Collection) -> dict[str, float]:
    """Share of non-dismissed Mementos held by each archive."""
    if collection.mode != "archive":
        raise ReportError("archive contributions need an archive-mode collection")
    counts = Counter(r.archive_id for r in collection.records if not r.dismissed and r.archive_id)
    n = sum(counts.values())
    return {k: counts[k] / n for k in sorted(counts)}


def _accepted_uris(collection: Collection) -> set[str]:
    return {normalize_uri(r.uri) for r in collection.records if r.accepted}


def compare_collections(a: Collection, b: Collection) -> tuple[int, int, int]:
    """(relevant in a, relevant in b, relevant in both) by normalized URI-R."""
    ua, ub = _accepted_uris(a), _accepted_uris(b)
    return len(ua), len(ub), len(ua & ub)


def summary(collection: Collection) -> dict:
    reasons = Counter(r.dismissed_reason.value for r in collection.records if r.dismissed)
    out = {
        "event": collection.event.name,
        "mode": collection.mode,
        "records": len(collection.records),
        "accepted": len(collection.accepted),
        "dismissed": dict(sorted(reasons.items())),
        "th_aggr": collection.event.th_aggr,
        "depths": [
            {"depth": row.depth, "crawled": row.total_crawled, "relevant": row.total_relevant,
             "dismissed": row.dismissed, "fraction_relevant": row.fraction_relevant}
            for row in depth_histogram(collection)
        ],
    }
    if collection.mode == "archive":
        out["archives"] = archive_contributions(collection)
    return out


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_report(collection: Collection, kind: str, out: str | Path, axis: str = "documents",
                 subset: str = "all") -> None:
    """Write one report table as CSV plus a JSON summary next to it."""
    out = Path(out)
    if kind == "depth":
        write_csv(out, ["depth", "total_crawled", "total_relevant", "fraction_relevant", "dismissed"],
                  [(r.depth, r.total_crawled, r.total_relevant, repr(r.fraction_relevant), r.dismissed)
                   for r in depth_histogram(collection)])
    elif kind == "accum":
        x = "elapsed_seconds" if axis == "time" else "documents"
        write_csv(out, [x, "accumulated_r_aggr"],
                  [(repr(a), repr(b)) for a, b in accumulated_relevance(collection, axis, subset)])
    elif kind == "archives":
        write_csv(out, ["archive_id", "fraction"],
                  [(k, repr(v)) for k, v in archive_contributions(collection).items()])
    else:
        raise ReportError(f"unknown report kind {kind!r}")
    out.with_suffix(".json").write_text(json.dumps(summary(collection), indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")
