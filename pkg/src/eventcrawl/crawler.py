"""The focused crawl loop and the persisted collection format.

The frontier is a max-priority queue keyed on the parent's aggregate
relevance (seeds get 1.0), with FIFO order among equal priorities.  Only
accepted pages below ``max_depth`` contribute outlinks.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import itertools
import json
import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable, Iterable, Sequence

from dateutil.parser import isoparse

from .content import IdfTable, build_term_vector, cosine, extract_main_text
from .dates import DateLookup, ProtocolError, resolve_live, resolve_memento
from .event_setup import EventSpec, is_html_uri
from .http import FetchError, Fetcher, fetch_following
from .memento import MementoClient, MementoError, NoPostEventMemento, NotArchived, archive_id, original_from_urim
from .temporal import RelevanceScores, temporal_score
from .urls import extract_outlinks, normalize_uri

log = logging.getLogger(__name__)

__all__ = [
    "FrontierEntry", "Frontier", "FrontierOverflow", "DismissReason", "CrawlRecord",
    "Collection", "Scorer", "accept", "crawl", "normalize_uri", "extract_outlinks",
]

MODES = ("live", "archive")


class FrontierOverflow(RuntimeError):
    pass


@dataclass(frozen=True)
class FrontierEntry:
    uri: str
    depth: int
    priority: float
    parent: str | None = None

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if not 0.0 <= self.priority <= 1.0:
            raise ValueError(f"priority {self.priority} outside [0, 1]")


class Frontier:
    """Max-priority queue with FIFO tie-breaking and per-URI deduplication.

    A URI is queued at most once; pushing it again with a higher priority
    supersedes the queued entry.  When ``cap`` is exceeded the lowest
    priority entry is evicted (``overflow="evict"``) or
    :class:`FrontierOverflow` is raised (``overflow="error"``).

    With ``instrument=True`` every push, pop and drop is appended to
    ``events`` as ``(kind, uri, priority)``.
    """

    def __init__(self, cap: int = 100_000, overflow: str = "evict", instrument: bool = False):
        if overflow not in ("evict", "error"):
            raise ValueError("overflow must be 'evict' or 'error'")
        if cap < 1:
            raise ValueError("cap must be positive")
        self.cap = cap
        self.overflow = overflow
        self.instrument = instrument
        self.events: list[tuple[str, str, float]] = []
        self.evicted = 0
        self._heap: list[tuple[float, int, FrontierEntry]] = []
        self._live: dict[str, tuple[float, int]] = {}
        self._seq = itertools.count()

    def __len__(self) -> int:
        return len(self._live)

    def __contains__(self, uri: str) -> bool:
        return uri in self._live

    def _log(self, kind: str, uri: str, priority: float) -> None:
        if self.instrument:
            self.events.append((kind, uri, priority))

    def push(self, entry: FrontierEntry) -> bool:
        queued = self._live.get(entry.uri)
        if queued is not None:
            if -queued[0] >= entry.priority:
                return False
            self._log("drop", entry.uri, -queued[0])
        elif len(self._live) >= self.cap:
            if self.overflow == "error":
                raise FrontierOverflow(f"frontier holds {self.cap} entries")
            worst_uri, worst = max(self._live.items(), key=lambda kv: kv[1])
            if worst[0] <= -entry.priority:
                # the newcomer is no better than the worst queued entry
                self.evicted += 1
                return False
            del self._live[worst_uri]
            self.evicted += 1
            self._log("drop", worst_uri, -worst[0])
        key = (-entry.priority, next(self._seq))
        self._live[entry.uri] = key
        heapq.heappush(self._heap, (*key, entry))
        self._log("push", entry.uri, entry.priority)
        return True

    def pop(self) -> FrontierEntry:
        while self._heap:
            neg, seq, entry = heapq.heappop(self._heap)
            if self._live.get(entry.uri) == (neg, seq):
                del self._live[entry.uri]
                self._log("pop", entry.uri, entry.priority)
                return entry
        raise IndexError("pop from empty frontier")

    def peek_priority(self) -> float | None:
        while self._heap:
            neg, seq, entry = self._heap[0]
            if self._live.get(entry.uri) == (neg, seq):
                return -neg
            heapq.heappop(self._heap)
        return None


class DismissReason(str, enum.Enum):
    NO_DATETIME = "no_datetime"
    FETCH_FAILED = "fetch_failed"
    NOT_ARCHIVED = "not_archived"
    NON_HTML = "non_html"


def _iso(dt: datetime | None) -> str | None:
    return None if dt is None else dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def _dt(s: str | None) -> datetime | None:
    return None if s is None else isoparse(s)


@dataclass(frozen=True)
class CrawlRecord:
    seq: int
    uri: str
    depth: int
    priority: float
    parent: str | None
    accepted: bool
    fetched_at: datetime
    elapsed: timedelta
    scores: RelevanceScores | None = None
    dt_r: datetime | None = None
    dt_r_source: str | None = None
    dismissed_reason: DismissReason | None = None
    uri_m: str | None = None
    archive_id: str | None = None
    digest: str | None = None

    def __post_init__(self):
        if self.accepted and (self.scores is None or self.dt_r is None):
            raise ValueError("an accepted record needs scores and a datetime")
        if self.accepted and self.dismissed_reason is not None:
            raise ValueError("a dismissed record cannot be accepted")

    @property
    def dismissed(self) -> bool:
        return self.dismissed_reason is not None

    @property
    def r_aggr(self) -> float | None:
        return None if self.scores is None else self.scores.r_aggr

    def to_json(self) -> dict:
        s = self.scores
        return {
            "seq": self.seq,
            "uri": self.uri,
            "depth": self.depth,
            "priority": self.priority,
            "parent": self.parent,
            "uri_m": self.uri_m,
            "archive_id": self.archive_id,
            "dt_r": _iso(self.dt_r),
            "dt_r_source": self.dt_r_source,
            "r_cont": None if s is None else s.r_cont,
            "r_temp": None if s is None else s.r_temp,
            "r_aggr": None if s is None else s.r_aggr,
            "accepted": self.accepted,
            "dismissed_reason": None if self.dismissed_reason is None else self.dismissed_reason.value,
            "fetched_at": _iso(self.fetched_at),
            "elapsed": self.elapsed.total_seconds(),
            "digest": self.digest,
        }

    @classmethod
    def from_json(cls, d: dict) -> "CrawlRecord":
        scores = None
        if d.get("r_aggr") is not None:
            scores = RelevanceScores(d["r_cont"], d["r_temp"], d["r_aggr"])
        reason = d.get("dismissed_reason")
        return cls(
            seq=d["seq"],
            uri=d["uri"],
            depth=d["depth"],
            priority=d["priority"],
            parent=d.get("parent"),
            accepted=d["accepted"],
            fetched_at=_dt(d["fetched_at"]),
            elapsed=timedelta(seconds=d["elapsed"]),
            scores=scores,
            dt_r=_dt(d.get("dt_r")),
            dt_r_source=d.get("dt_r_source"),
            dismissed_reason=None if reason is None else DismissReason(reason),
            uri_m=d.get("uri_m"),
            archive_id=d.get("archive_id"),
            digest=d.get("digest"),
        )


@dataclass
class Collection:
    event: EventSpec
    mode: str
    records: list[CrawlRecord] = field(default_factory=list)
    started_at: datetime | None = None
    finished_at: datetime | None = None
    bodies: dict[str, bytes] = field(default_factory=dict, repr=False)
    stats: dict = field(default_factory=dict)

    @property
    def accepted(self) -> list[CrawlRecord]:
        return [r for r in self.records if r.accepted]

    def save(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "collection.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec.to_json(), sort_keys=True, ensure_ascii=False) + "\n")
        self.event.save(out / "event.json")
        meta = {
            "mode": self.mode,
            "started_at": _iso(self.started_at),
            "finished_at": _iso(self.finished_at),
            "records": len(self.records),
            "accepted": len(self.accepted),
            **self.stats,
        }
        (out / "crawl.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")
        raw = out / "raw"
        if raw.exists():
            shutil.rmtree(raw)
        raw.mkdir()
        for digest, body in sorted(self.bodies.items()):
            (raw / f"{digest}.html").write_bytes(body)
        return out

    @classmethod
    def load(cls, in_dir: str | Path, with_bodies: bool = False) -> "Collection":
        d = Path(in_dir)
        event = EventSpec.load(d / "event.json")
        with open(d / "collection.jsonl", encoding="utf-8") as fh:
            records = [CrawlRecord.from_json(json.loads(line)) for line in fh if line.strip()]
        meta = {}
        if (d / "crawl.json").exists():
            meta = json.loads((d / "crawl.json").read_text(encoding="utf-8"))
        mode = meta.pop("mode", "archive" if any(r.uri_m for r in records) else "live")
        started, finished = _dt(meta.pop("started_at", None)), _dt(meta.pop("finished_at", None))
        meta.pop("records", None)
        meta.pop("accepted", None)
        bodies = {}
        if with_bodies and (d / "raw").is_dir():
            bodies = {p.stem: p.read_bytes() for p in sorted((d / "raw").glob("*.html"))}
        return cls(event, mode, records, started, finished, bodies, meta)


def accept(scores: RelevanceScores | None, spec: EventSpec) -> bool:
    """Inclusive threshold test on the aggregate score."""
    return scores is not None and scores.r_aggr >= spec.th_aggr


class Scorer:
    """Content and temporal relevance of one page against an event."""

    def __init__(self, spec: EventSpec, mode: str, idf: IdfTable | None = None):
        self.spec = spec
        self.idf = idf or IdfTable.bundled()
        self.params = spec.temporal_params(mode)

    def content(self, text: str) -> float:
        return cosine(build_term_vector(text, self.idf), self.spec.event_vector)

    def temporal(self, dt_r: datetime) -> float:
        return temporal_score(dt_r, self.params)

    def score(self, text: str, dt_r: datetime) -> RelevanceScores:
        return RelevanceScores.combine(self.content(text), self.temporal(dt_r),
                                       self.spec.alpha, self.spec.beta)


@dataclass
class _Outcome:
    scores: RelevanceScores | None = None
    dt_r: datetime | None = None
    dt_r_source: str | None = None
    reason: DismissReason | None = None
    uri_m: str | None = None
    archive_id: str | None = None
    body: bytes | None = None
    outlinks: list[str] = field(default_factory=list)
    final_uri: str | None = None


def _archive_outlinks(html: str, uri_m: str, holder: str) -> list[str]:
    """Outlinks of a Memento mapped back to URI-Rs.

    Rewritten links are stripped to their original; links to the archive's
    own pages (banners, navigation) are dropped; anything else is already
    an original URI.
    """
    out, seen = [], set()
    for link in extract_outlinks(html, uri_m):
        orig = original_from_urim(link)
        if orig is None:
            if archive_id(link) == holder:
                continue
            orig = link
        try:
            orig = normalize_uri(orig)
        except ValueError:
            continue
        if orig not in seen:
            seen.add(orig)
            out.append(orig)
    return out


class _Worker:
    def __init__(self, spec: EventSpec, mode: str, fetcher: Fetcher | None,
                 memento_client: MementoClient | None, scorer: Scorer,
                 lookup: DateLookup | None):
        self.spec = spec
        self.mode = mode
        self.fetcher = fetcher
        self.client = memento_client
        self.scorer = scorer
        self.lookup = lookup

    def __call__(self, entry: FrontierEntry) -> _Outcome:
        if not is_html_uri(entry.uri):
            return _Outcome(reason=DismissReason.NON_HTML)
        try:
            if self.mode == "live":
                return self._live(entry)
            return self._archive(entry)
        except (FetchError, ProtocolError, MementoError) as exc:
            log.info("fetch failed for %s: %s", entry.uri, exc)
            return _Outcome(reason=DismissReason.FETCH_FAILED)

    def _finish(self, out: _Outcome, entry: FrontierEntry, html: str, evidence, links) -> _Outcome:
        if evidence is None:
            out.reason = DismissReason.NO_DATETIME
            return out
        out.dt_r, out.dt_r_source = evidence.value, evidence.source.value
        out.scores = self.scorer.score(extract_main_text(html), evidence.value)
        if accept(out.scores, self.spec) and entry.depth < self.spec.max_depth:
            out.outlinks = links()
        return out

    def _live(self, entry: FrontierEntry) -> _Outcome:
        resp = fetch_following(self.fetcher, entry.uri)
        if resp.status != 200:
            return _Outcome(reason=DismissReason.FETCH_FAILED)
        if not resp.is_html:
            return _Outcome(reason=DismissReason.NON_HTML)
        html = resp.text
        out = _Outcome(body=resp.body, final_uri=resp.url)
        evidence = resolve_live(entry.uri, html, self.lookup)
        return self._finish(out, entry, html, evidence, lambda: extract_outlinks(html, resp.url))

    def _archive(self, entry: FrontierEntry) -> _Outcome:
        try:
            memento, resp = self.client.fetch_memento(entry.uri, self.spec.dt_e)
        except (NotArchived, NoPostEventMemento) as exc:
            log.info("no usable memento for %s: %s", entry.uri, exc)
            return _Outcome(reason=DismissReason.NOT_ARCHIVED)
        out = _Outcome(uri_m=memento.uri_m, archive_id=memento.archive_id)
        if not resp.is_html:
            out.reason = DismissReason.NON_HTML
            return out
        html = resp.text
        out.body = resp.body
        evidence = resolve_memento(memento, resp.headers, html, self.lookup,
                                   self.scorer.params)
        return self._finish(out, entry, html, evidence,
                            lambda: _archive_outlinks(html, memento.uri_m, memento.archive_id))


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


def crawl(spec: EventSpec, mode: str, fetcher: Fetcher | None = None,
          memento_client: MementoClient | None = None, scorer: Scorer | None = None,
          sinks: Sequence[Callable[[CrawlRecord], None]] = (), *,
          lookup: DateLookup | None = None, workers: int = 1,
          clock: Callable[[], datetime] = _utcnow, frontier: Frontier | None = None,
          idf: IdfTable | None = None, keep_bodies: bool = True) -> Collection:
    """Run a focused crawl from ``spec.seeds`` until the frontier is empty.

    With ``workers > 1`` up to that many entries are popped and fetched
    concurrently, but records are appended, and outlinks enqueued, in
    pop order.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == "archive" and memento_client is None:
        if fetcher is None:
            raise ValueError("archive mode needs a Memento client or a fetcher")
        memento_client = MementoClient(fetcher)
    if mode == "live" and fetcher is None:
        raise ValueError("live mode needs a fetcher")
    if workers < 1:
        raise ValueError("workers must be >= 1")

    scorer = scorer or Scorer(spec, mode, idf)
    work = _Worker(spec, mode, fetcher, memento_client, scorer, lookup)
    frontier = frontier if frontier is not None else Frontier()
    visited: set[str] = set()

    started = clock()
    coll = Collection(spec, mode, started_at=started)
    for seed in spec.seeds:
        frontier.push(FrontierEntry(normalize_uri(seed), 0, 1.0, None))

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while len(frontier):
            batch = []
            while len(frontier) and len(batch) < workers:
                entry = frontier.pop()
                if entry.uri in visited:
                    continue
                visited.add(entry.uri)
                batch.append(entry)
            if not batch:
                break
            if pool is None:
                outcomes: Iterable[_Outcome] = [work(batch[0])]
            else:
                outcomes = pool.map(work, batch)
            for entry, out in zip(batch, outcomes):
                rec = _record(len(coll.records), entry, out, spec, clock(), started)
                coll.records.append(rec)
                if out.body is not None and keep_bodies:
                    coll.bodies[rec.digest] = out.body
                if out.final_uri:
                    try:
                        visited.add(normalize_uri(out.final_uri))
                    except ValueError:
                        pass
                for sink in sinks:
                    sink(rec)
                if rec.accepted:
                    for link in out.outlinks:
                        if link not in visited:
                            frontier.push(FrontierEntry(link, entry.depth + 1,
                                                        rec.r_aggr, entry.uri))
    finally:
        if pool is not None:
            pool.shutdown()
    coll.finished_at = clock()
    coll.stats = {"evicted": frontier.evicted, "workers": workers}
    return coll


def _record(seq: int, entry: FrontierEntry, out: _Outcome, spec: EventSpec,
            now: datetime, started: datetime) -> CrawlRecord:
    digest = hashlib.sha256(out.body).hexdigest() if out.body is not None else None
    return CrawlRecord(
        seq=seq,
        uri=entry.uri,
        depth=entry.depth,
        priority=entry.priority,
        parent=entry.parent,
        accepted=out.reason is None and accept(out.scores, spec),
        fetched_at=now,
        elapsed=now - started,
        scores=out.scores,
        dt_r=out.dt_r,
        dt_r_source=out.dt_r_source,
        dismissed_reason=out.reason,
        uri_m=out.uri_m,
        archive_id=out.archive_id,
        digest=digest,
    )
