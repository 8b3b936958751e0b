"""Event model assembly from the change-point version of a Wikipedia page."""

from __future__ import annotations

import calendar
import json
import logging
import re
from dataclasses import dataclass, field, fields
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Mapping
from urllib.parse import unquote, urljoin, urlsplit

from bs4 import BeautifulSoup
from dateutil.parser import isoparse

from .changepoint import NoChangePoint, RevisionHistory, change_point_datetime, select_version
from .content import (
    IdfTable,
    TermVector,
    build_event_vector,
    content_threshold,
    extract_main_text,
    tokenize,
)
from .memento import original_from_urim
from .temporal import (
    NoGraceData,
    ReferenceEntry,
    TemporalParams,
    aggregate_threshold,
    grace_period_archive,
    grace_period_live,
    temporal_threshold,
)
from .urls import normalize_uri

log = logging.getLogger(__name__)

__all__ = [
    "EventSpec", "EventSetupError", "CrawlConfig", "ReferenceEntry", "parse_event_datetime",
    "infobox_date_text", "parse_references", "extract_seeds", "build_event_spec",
]


class EventSetupError(ValueError):
    pass


# -- event datetime --------------------------------------------------------

_MONTHS = {name.lower(): i for i, name in enumerate(calendar.month_name) if name}
_MONTHS.update({name.lower(): i for i, name in enumerate(calendar.month_abbr) if name})
_MONTHS["sept"] = 9
_MONTH_RE = "|".join(sorted(_MONTHS, key=len, reverse=True))

_DATE_RES = [
    re.compile(rf"\b(?P<m>{_MONTH_RE})\.?\s+(?P<d>\d{{1,2}})(?:st|nd|rd|th)?,?\s+(?P<y>\d{{4}})\b", re.I),
    re.compile(rf"\b(?P<d>\d{{1,2}})(?:st|nd|rd|th)?\s+(?P<m>{_MONTH_RE})\.?,?\s+(?P<y>\d{{4}})\b", re.I),
    re.compile(r"\b(?P<y>\d{4})-(?P<mo>\d{2})-(?P<d>\d{2})\b"),
]
_TIME_RE = re.compile(r"\b(\d{1,2}):(\d{2})(?::(\d{2}))?\s*(a\.?\s?m\.?|p\.?\s?m\.?)?", re.I)
_UTC_OFFSET_RE = re.compile(r"\bUTC\s*([+\-−])\s*(\d{1,2})(?::?(\d{2}))?")
TZ_OFFSETS = {
    "UTC": 0, "GMT": 0, "EST": -5, "EDT": -4, "CST": -6, "CDT": -5, "MST": -7, "MDT": -6,
    "PST": -8, "PDT": -7, "AKST": -9, "AKDT": -8, "HST": -10, "BST": 1, "CET": 1, "CEST": 2,
}
_TZ_RE = re.compile(r"\b(" + "|".join(TZ_OFFSETS) + r")\b")


def find_dates(text: str) -> list[tuple[int, datetime]]:
    """Calendar dates written in ``text`` with their offsets, in text order.

    Like every date-only value, each becomes 00:00:01 UTC of its day.
    """
    found = []
    for pattern in _DATE_RES:
        for m in pattern.finditer(text):
            g = m.groupdict()
            month = int(g["mo"]) if g.get("mo") else _MONTHS[g["m"].lower()]
            try:
                dt = datetime(int(g["y"]), month, int(g["d"]), 0, 0, 1, tzinfo=timezone.utc)
            except ValueError:
                continue
            found.append((m.start(), m.end(), dt))
    found.sort(key=lambda t: t[0])
    return [(start, dt) for start, _, dt in found]


def parse_event_datetime(text: str) -> datetime:
    """Event datetime in UTC; a date without a time becomes 00:00:01 UTC."""
    clean = text.replace("\xa0", " ").replace(" ", " ")
    dates = []
    for pattern in _DATE_RES:
        dates.extend(pattern.finditer(clean))
    if not dates:
        raise EventSetupError(f"no parseable date in {text!r}")
    m = min(dates, key=lambda m: m.start())
    g = m.groupdict()
    month = int(g["mo"]) if g.get("mo") else _MONTHS[g["m"].lower()]
    try:
        day = datetime(int(g["y"]), month, int(g["d"]))
    except ValueError as exc:
        raise EventSetupError(f"invalid date in {text!r}") from exc

    rest = re.sub(r"\(\d{4}-\d{2}-\d{2}\)", " ", clean[m.end():])
    tm = _TIME_RE.search(rest)
    if tm is None:
        return day.replace(hour=0, minute=0, second=1, tzinfo=timezone.utc)
    hour, minute, second = int(tm[1]), int(tm[2]), int(tm[3] or 0)
    ampm = (tm[4] or "").lower().replace(".", "").replace(" ", "")
    if ampm == "pm" and hour < 12:
        hour += 12
    elif ampm == "am" and hour == 12:
        hour = 0
    local = day.replace(hour=hour, minute=minute, second=second)

    offset = timedelta(0)
    um = _UTC_OFFSET_RE.search(clean)
    if um:
        sign = -1 if um[1] in "-−" else 1
        offset = sign * timedelta(hours=int(um[2]), minutes=int(um[3] or 0))
    else:
        zm = _TZ_RE.search(clean)
        if zm:
            offset = timedelta(hours=TZ_OFFSETS[zm[1]])
    return (local - offset).replace(tzinfo=timezone.utc)


def infobox_date_text(wiki_html: str) -> str | None:
    soup = BeautifulSoup(wiki_html, "lxml")
    for box in soup.select("table.infobox"):
        for row in box.find_all("tr"):
            th, td = row.find("th"), row.find("td")
            if th and td and th.get_text(" ", strip=True).lower() in ("date", "date(s)"):
                return td.get_text(" ", strip=True)
    return None


# -- seeds -----------------------------------------------------------------

NON_HTML_EXTENSIONS = frozenset(
    {".pdf", ".jpg", ".jpeg", ".png", ".gif", ".svg", ".mp3", ".mp4", ".avi", ".mov",
     ".wmv", ".zip", ".gz", ".tar", ".doc", ".docx", ".xls", ".xlsx", ".ppt", ".pptx",
     ".csv", ".txt", ".xml", ".json", ".webm", ".ogg", ".wav"}
)
# country-code TLDs of countries whose web content is predominantly not English
NON_ENGLISH_TLDS = frozenset(
    "ru cn jp de fr es it nl pl br pt se no fi dk cz sk hu ro bg gr tr ua by kz ir sa ae eg "
    "il kr tw vn th id mx ar cl co pe ve at ch be lt lv ee hr si rs ba mk al az ge am md "
    "is lu tn ma dz jo lb sy iq ly".split()
)
ENGLISH_STOPWORDS = frozenset(
    "a about above after again against all am an and any are as at be because been before "
    "being below between both but by can could did do does doing down during each few for "
    "from further had has have having he her here hers herself him himself his how i if in "
    "into is it its itself just me more most my myself no nor not now of off on once only or "
    "other our ours out over own same she should so some such than that the their theirs "
    "them themselves then there these they this those through to too under until up very "
    "was we were what when where which while who whom why will with would you your yours "
    "said also after".split()
)
MIN_STOPWORD_RATIO = 0.1
WIKI_HOSTS = re.compile(r"(^|\.)(wikipedia|wikimedia|wikidata|mediawiki|wikimediafoundation)\.org$")


def is_english_text(text: str, min_ratio: float = MIN_STOPWORD_RATIO) -> bool:
    toks = tokenize(text)
    if not toks:
        return True
    return sum(t in ENGLISH_STOPWORDS for t in toks) / len(toks) >= min_ratio


def is_english_uri(uri: str) -> bool:
    parts = urlsplit(uri)
    tld = (parts.hostname or "").rsplit(".", 1)[-1].lower()
    if tld in NON_ENGLISH_TLDS:
        return False
    path = unquote(parts.path + "?" + parts.query)
    return not any(ord(ch) > 0x24F for ch in path)


def is_html_uri(uri: str) -> bool:
    path = urlsplit(uri).path.lower()
    dot = path.rfind(".")
    return dot < 0 or path.rfind("/") > dot or path[dot:] not in NON_HTML_EXTENSIONS


def _urim_datetime(uri_m: str) -> datetime | None:
    m = re.search(r"/(\d{14}|\d{8})(?:[a-z]{2}_)?/", uri_m)
    if not m:
        return None
    ts = m[1].ljust(14, "0")
    try:
        return datetime.strptime(ts, "%Y%m%d%H%M%S").replace(tzinfo=timezone.utc)
    except ValueError:
        return None


def _coins_date(li) -> datetime | None:
    for span in li.select("span.Z3988"):
        m = re.search(r"rft\.date=([^&]+)", unquote(span.get("title", "")))
        if m:
            dates = find_dates(m[1].replace("+", " "))
            if dates:
                return dates[0][1]
            y = re.fullmatch(r"(\d{4})(?:-(\d{2}))?", m[1].strip())
            if y:
                return datetime(int(y[1]), int(y[2] or 1), 1, 0, 0, 1, tzinfo=timezone.utc)
    return None


def _is_external(uri: str) -> bool:
    parts = urlsplit(uri)
    if parts.scheme not in ("http", "https") or not parts.hostname:
        return False
    return not WIKI_HOSTS.search(parts.hostname.lower())


def parse_references(wiki_html: str, base_uri: str) -> list[ReferenceEntry]:
    """All external references of a rendered Wikipedia page, before filtering.

    The cited date comes from the citation's COinS ``rft.date`` field or
    the first date written before "Retrieved"/"Archived".  The archival
    date comes from an archive link's timestamp or the "Archived ... on"
    phrase.
    """
    soup = BeautifulSoup(wiki_html or "", "lxml")
    items = [li for ol in soup.select("ol.references") for li in ol.find_all("li", recursive=False)]
    if not items:
        items = soup.select(".reflist li, .references li") or [soup]
    entries = []
    for li in items:
        anchors = [urljoin(base_uri, a["href"]) for a in li.find_all("a", href=True)]
        anchors = [u for u in anchors if _is_external(u)]
        if not anchors:
            continue
        direct = [u for u in anchors if original_from_urim(u) is None]
        archived = [u for u in anchors if original_from_urim(u) is not None]
        uri = direct[0] if direct else original_from_urim(archived[0])
        text = li.get_text(" ", strip=True)
        cut = len(text)
        for marker in ("Retrieved", "Archived", "Accessed"):
            i = text.find(marker)
            if 0 <= i < cut:
                cut = i
        cited = _coins_date(li)
        if cited is None:
            dates = find_dates(text[:cut])
            cited = dates[0][1] if dates else None
        archived_dt = _urim_datetime(archived[0]) if archived else None
        if archived_dt is None:
            m = re.search(r"Archived\b.*?\bon\b", text)
            if m:
                dates = find_dates(text[m.end():])
                archived_dt = dates[0][1] if dates else None
        entries.append(ReferenceEntry(uri, cited, archived_dt))
    return entries


def extract_seeds(wiki_html: str, base_uri: str,
                  reference_texts: Mapping[str, str] | None = None,
                  content_types: Mapping[str, str] | None = None) -> list[ReferenceEntry]:
    """Deduplicated English HTML references of the page, in page order."""
    seen = set()
    seeds = []
    for ref in parse_references(wiki_html, base_uri):
        try:
            key = normalize_uri(ref.uri)
        except ValueError:
            continue
        if key in seen:
            continue
        seen.add(key)
        ctype = (content_types or {}).get(ref.uri)
        if ctype is not None:
            if ctype.split(";")[0].strip().lower() not in ("text/html", "application/xhtml+xml"):
                continue
        elif not is_html_uri(ref.uri):
            continue
        if not is_english_uri(ref.uri):
            continue
        text = (reference_texts or {}).get(ref.uri)
        if text is not None and not is_english_text(text):
            continue
        seeds.append(ReferenceEntry(key, ref.cited_datetime, ref.archived_datetime))
    if not seeds:
        raise EventSetupError("no seeds")
    return seeds


# -- event spec ------------------------------------------------------------

def _iso(dt: datetime | None) -> str | None:
    return None if dt is None else dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _dt(value: str | None) -> datetime | None:
    return None if value is None else isoparse(value).astimezone(timezone.utc)


@dataclass(frozen=True)
class EventSpec:
    name: str
    dt_e: datetime
    dt_cp: datetime | None
    dt_upper: datetime
    seeds: tuple[str, ...]
    event_vector: TermVector
    th_cont: float
    th_temp: float
    alpha: float = 0.5
    beta: float = 0.5
    grace_live: timedelta = timedelta(0)
    grace_archive: timedelta = timedelta(0)
    max_depth: int = 5
    grace_cutoff: bool = True
    version_id: int | None = None
    references: tuple[ReferenceEntry, ...] = ()

    def __post_init__(self):
        if not self.seeds:
            raise EventSetupError("seeds must be non-empty")
        if self.dt_cp is not None and not self.dt_e < self.dt_cp:
            raise EventSetupError("event datetime must precede the change point")
        if not self.dt_e < self.dt_upper:
            raise EventSetupError("event datetime must precede the interval end")
        if self.alpha < 0 or self.beta < 0:
            raise EventSetupError("weights must be non-negative")
        for name in ("th_cont", "th_temp"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise EventSetupError(f"{name} must lie in [0, 1]")
        if self.max_depth < 0:
            raise EventSetupError("max_depth must be >= 0")

    @property
    def th_aggr(self) -> float:
        return aggregate_threshold(self.th_cont, self.th_temp, self.alpha, self.beta)

    def grace(self, mode: str) -> timedelta:
        return self.grace_archive if mode == "archive" else self.grace_live

    def temporal_params(self, mode: str) -> TemporalParams:
        return TemporalParams(self.dt_e, self.dt_upper, self.grace(mode), self.grace_cutoff)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "dt_e": _iso(self.dt_e),
            "dt_cp": _iso(self.dt_cp),
            "dt_upper": _iso(self.dt_upper),
            "seeds": list(self.seeds),
            "th_cont": self.th_cont,
            "th_temp": self.th_temp,
            "th_aggr": self.th_aggr,
            "alpha": self.alpha,
            "beta": self.beta,
            "grace_live": int(self.grace_live.total_seconds()),
            "grace_archive": int(self.grace_archive.total_seconds()),
            "max_depth": self.max_depth,
            "grace_cutoff": self.grace_cutoff,
            "version_id": self.version_id,
            "references": [
                {"uri": r.uri, "cited_datetime": _iso(r.cited_datetime),
                 "archived_datetime": _iso(r.archived_datetime)}
                for r in self.references
            ],
            "event_vector": self.event_vector.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "EventSpec":
        return cls(
            name=d["name"],
            dt_e=_dt(d["dt_e"]),
            dt_cp=_dt(d.get("dt_cp")),
            dt_upper=_dt(d["dt_upper"]),
            seeds=tuple(d["seeds"]),
            event_vector=TermVector.from_json(d["event_vector"]),
            th_cont=d["th_cont"],
            th_temp=d["th_temp"],
            alpha=d["alpha"],
            beta=d["beta"],
            grace_live=timedelta(seconds=d["grace_live"]),
            grace_archive=timedelta(seconds=d["grace_archive"]),
            max_depth=d["max_depth"],
            grace_cutoff=d.get("grace_cutoff", True),
            version_id=d.get("version_id"),
            references=tuple(
                ReferenceEntry(r["uri"], _dt(r.get("cited_datetime")), _dt(r.get("archived_datetime")))
                for r in d.get("references", [])
            ),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EventSpec":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class CrawlConfig:
    name: str = "event"
    wiki_html: str | None = None
    history: str | None = None
    page_title: str | None = None
    base_uri: str = "https://en.wikipedia.org/wiki/"
    event_spec: str | None = None
    dt_e: str | None = None
    now: str | None = None
    alpha: float = 0.5
    beta: float = 0.5
    max_depth: int = 5
    repeats: int = 10
    split_fraction: float = 0.6
    rng_seed: int = 0
    mode: str = "archive"
    workers: int = 1
    timeout: float = 30.0
    idf_table: str | None = None
    reference_texts: str | None = None
    lookup: str | None = None
    fixture: str | None = None
    timegate: str | None = None
    timemap: str | None = None
    politeness_delay: float = 0.0
    frontier_cap: int = 100_000
    grace_cutoff: bool = True
    candidate_mode: str = "concatenated"
    root: Path = field(default=Path("."), repr=False)

    PATH_KEYS = ("wiki_html", "history", "event_spec", "idf_table", "reference_texts",
                 "lookup", "fixture")

    def __post_init__(self):
        if self.mode not in ("live", "archive"):
            raise EventSetupError(f"mode must be live or archive, not {self.mode!r}")
        if self.alpha < 0 or self.beta < 0:
            raise EventSetupError("alpha and beta must be non-negative")
        if not 0 < self.split_fraction <= 1:
            raise EventSetupError("split_fraction must be in (0, 1]")

    @classmethod
    def from_dict(cls, data: Mapping, root: str | Path = ".") -> "CrawlConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise EventSetupError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data, root=Path(root))

    @classmethod
    def from_file(cls, path: str | Path) -> "CrawlConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), root=path.parent)

    def path(self, key: str) -> Path | None:
        value = getattr(self, key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.root / p

    def load_idf(self) -> IdfTable:
        p = self.path("idf_table")
        return IdfTable.load(p) if p else IdfTable.bundled()


def build_event_spec(wiki_html: str, history: RevisionHistory | None, config: CrawlConfig, *,
                     idf: IdfTable | None = None,
                     reference_texts: Mapping[str, str] | None = None,
                     fetcher=None, now: datetime | None = None) -> EventSpec:
    """Derive the full event model: datetimes, seeds, vector, thresholds."""
    idf = idf or config.load_idf()

    dt_cp, version_id = None, None
    if history is not None and history.revisions:
        try:
            dt_cp = change_point_datetime(history)
            version_id = select_version(history, dt_cp)
        except NoChangePoint:
            log.info("no change point; using the live page version")
            version_id = history.revisions[-1].revid

    if config.dt_e:
        dt_e = _dt(config.dt_e)
    else:
        raw = infobox_date_text(wiki_html)
        if raw is None:
            raise EventSetupError("no event date in infobox and no dt_e configured")
        dt_e = parse_event_datetime(raw)

    if now is None:
        now = _dt(config.now) if config.now else datetime.now(timezone.utc).replace(microsecond=0)
    dt_upper = dt_cp or now

    try:
        refs = extract_seeds(wiki_html, config.base_uri, reference_texts)
    except EventSetupError as exc:
        raise EventSetupError(f"seed extraction: {exc}") from exc

    texts: dict[str, str] = {}
    for ref in refs:
        text = (reference_texts or {}).get(ref.uri)
        if text is None and fetcher is not None:
            text = _fetch_text(fetcher, ref.uri)
        if text:
            texts[ref.uri] = text
    usable = [r for r in refs if r.uri in texts]
    ref_texts = [texts[r.uri] for r in usable]

    wiki_text = extract_main_text(wiki_html)
    event_vector, _ = build_event_vector(wiki_text, ref_texts, config.split_fraction,
                                         config.rng_seed, idf)
    try:
        th_cont = content_threshold(wiki_text, ref_texts, config.repeats, config.split_fraction,
                                    idf, config.rng_seed, candidate=config.candidate_mode)
    except ValueError as exc:
        raise EventSetupError(f"content threshold: {exc}") from exc

    delta_t = (dt_upper - dt_e) / 4
    graces = {}
    for mode, fn in (("archive", grace_period_archive), ("live", grace_period_live)):
        try:
            graces[mode] = fn(refs)
        except NoGraceData as exc:
            log.info("%s grace period falls back to delta_t: %s", mode, exc)
            graces[mode] = delta_t
    graces = {k: timedelta(seconds=int(v.total_seconds())) for k, v in graces.items()}

    params = TemporalParams(dt_e, dt_upper, graces[config.mode], config.grace_cutoff)
    try:
        th_temp = temporal_threshold(usable, config.repeats, config.split_fraction, params,
                                     config.rng_seed)
    except ValueError as exc:
        raise EventSetupError(f"temporal threshold: {exc}") from exc

    return EventSpec(
        name=config.name,
        dt_e=dt_e,
        dt_cp=dt_cp,
        dt_upper=dt_upper,
        seeds=tuple(r.uri for r in refs),
        event_vector=event_vector,
        th_cont=th_cont,
        th_temp=th_temp,
        alpha=config.alpha,
        beta=config.beta,
        grace_live=graces["live"],
        grace_archive=graces["archive"],
        max_depth=config.max_depth,
        grace_cutoff=config.grace_cutoff,
        version_id=version_id,
        references=tuple(refs),
    )


def _fetch_text(fetcher, uri: str) -> str | None:
    from .http import FetchError, fetch_following

    try:
        resp = fetch_following(fetcher, uri)
    except FetchError as exc:
        log.warning("reference %s unavailable: %s", uri, exc)
        return None
    if resp.status != 200 or not resp.is_html:
        return None
    return extract_main_text(resp.text)
