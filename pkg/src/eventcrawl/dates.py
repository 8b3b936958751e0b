"""Resource datetime (DT_R) evidence for live pages and Mementos."""

from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass
from datetime import datetime, time, timezone
from email.utils import parsedate_to_datetime
from pathlib import Path
from typing import Mapping, Protocol

from bs4 import BeautifulSoup
from dateutil.parser import isoparse

log = logging.getLogger(__name__)

# date-only evidence is pinned to one second past midnight UTC
DATE_ONLY_TIME = time(0, 0, 1)
YEAR_MIN, YEAR_MAX = 1990, 2049

HTML_DATE_KEYS = frozenset(
    {"article:published", "article:published_time", "datepublished",
     "og:published_time", "date", "dc.date"}
)


class Source(str, enum.Enum):
    URI_PATTERN = "uri_pattern"
    HTML_META = "html_meta"
    EXTERNAL_LOOKUP = "external_lookup"
    MEMENTO_DATETIME = "memento_datetime"
    ARCHIVED_HEADER = "archived_header"


@dataclass(frozen=True)
class DatetimeEvidence:
    source: Source
    value: datetime


class ProtocolError(Exception):
    """A Memento response violated the Memento protocol."""


class DateLookup(Protocol):
    """External first-mention lookup (CarbonDate style).

    Implementations must be safe to call from several threads.
    """

    def lookup(self, uri: str) -> datetime | None: ...


class StubLookup:
    """Offline lookup backed by a URI -> ISO-8601 map."""

    def __init__(self, table: Mapping[str, str | datetime] | None = None):
        self.table = {}
        for uri, value in (table or {}).items():
            self.table[uri] = value if isinstance(value, datetime) else isoparse(value)
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "StubLookup":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def lookup(self, uri: str) -> datetime | None:
        self.calls += 1
        return self.table.get(uri)


class CarbonDateLookup:
    """Queries a CarbonDate-compatible HTTP service.

    The service is expected to answer ``GET {endpoint}{uri}`` with JSON
    carrying an ``estimated-creation-date`` field.
    """

    def __init__(self, endpoint: str, fetcher):
        self.endpoint = endpoint
        self.fetcher = fetcher

    def lookup(self, uri: str) -> datetime | None:
        resp = self.fetcher.fetch(self.endpoint + uri)
        if resp.status != 200:
            return None
        value = json.loads(resp.text).get("estimated-creation-date")
        return parse_datetime(value) if value else None


def to_utc(dt: datetime) -> datetime:
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _date_only(y: int, m: int, d: int) -> datetime | None:
    if not YEAR_MIN <= y <= YEAR_MAX:
        return None
    try:
        return datetime.combine(datetime(y, m, d).date(), DATE_ONLY_TIME, tzinfo=timezone.utc)
    except ValueError:
        return None


_URI_DAY = [
    re.compile(r"/((?:19|20)\d{2})/(\d{1,2})/(\d{1,2})(?:/|$|[?#])"),
    re.compile(r"(?<!\d)((?:19|20)\d{2})-(\d{2})-(\d{2})(?!\d)"),
    re.compile(r"(?<!\d)((?:19|20)\d{2})(\d{2})(\d{2})(?!\d)"),
]
_URI_MONTH = re.compile(r"/((?:19|20)\d{2})/(\d{1,2})(?:/|$|[?#])")


def from_uri(uri: str) -> datetime | None:
    """Date embedded in a URI path, at day or month granularity."""
    for pattern in _URI_DAY:
        for m in pattern.finditer(uri):
            dt = _date_only(int(m[1]), int(m[2]), int(m[3]))
            if dt is not None:
                return dt
    for m in _URI_MONTH.finditer(uri):
        if re.match(r"/\d{1,2}(?:/|$|[?#])", uri[m.end(2):]):
            # looks like /YYYY/MM/DD with an invalid day; do not degrade
            continue
        dt = _date_only(int(m[1]), int(m[2]), 1)
        if dt is not None:
            return dt
    return None


def parse_datetime(value: str) -> datetime | None:
    """Parse ISO-8601 (with offset) or RFC 1123 text; naive values are UTC."""
    value = value.strip()
    if not value:
        return None
    try:
        dt = isoparse(value)
    except (ValueError, OverflowError):
        try:
            dt = parsedate_to_datetime(value)
        except (TypeError, ValueError, IndexError):
            return None
        if dt is None:
            return None
    else:
        if re.fullmatch(r"\d{4}-\d{2}-\d{2}", value):
            dt = datetime.combine(dt.date(), DATE_ONLY_TIME)
    return to_utc(dt)


def from_html(html: str) -> datetime | None:
    """Earliest publication datetime declared in meta or time elements."""
    if not html:
        return None
    soup = BeautifulSoup(html, "lxml")
    found = []
    for el in soup.find_all(["meta", "time"]):
        keys = {
            str(el.get(attr, "")).lower()
            for attr in ("property", "name", "itemprop")
        }
        if not keys & HTML_DATE_KEYS and not (el.name == "time" and el.has_attr("pubdate")):
            continue
        raw = el.get("content") if el.name == "meta" else (el.get("datetime") or el.get_text())
        dt = parse_datetime(str(raw or ""))
        if dt is not None:
            found.append(dt)
    return min(found, default=None)


def from_external(uri: str, lookup: DateLookup | None) -> datetime | None:
    if lookup is None:
        return None
    try:
        dt = lookup.lookup(uri)
    except Exception as exc:  # provider trouble never aborts a crawl
        log.warning("date lookup failed for %s: %s", uri, exc)
        return None
    return to_utc(dt) if dt is not None else None


def resolve_live(uri: str, html: str, lookup: DateLookup | None = None) -> DatetimeEvidence | None:
    """Earliest available evidence for a live page; ``None`` means dismiss."""
    candidates = [
        (from_uri(uri), Source.URI_PATTERN),
        (from_html(html), Source.HTML_META),
        (from_external(uri, lookup), Source.EXTERNAL_LOOKUP),
    ]
    found = [DatetimeEvidence(src, dt) for dt, src in candidates if dt is not None]
    if not found:
        return None
    return min(found, key=lambda e: e.value)


_ARCHIVED_HEADER = re.compile(r"^x-(?:[a-z]+-)*orig(?:inal)?-last-modified$|^x-last-modified$", re.I)


def archived_last_modified(headers: Mapping[str, str]) -> datetime | None:
    for name, value in headers.items():
        if _ARCHIVED_HEADER.match(name):
            dt = parse_datetime(value)
            if dt is not None:
                return dt
    return None


def _header(headers: Mapping[str, str], name: str) -> str | None:
    name = name.lower()
    for k, v in headers.items():
        if k.lower() == name:
            return v
    return None


def resolve_memento(memento, response_headers: Mapping[str, str], html: str,
                    lookup: DateLookup | None, params) -> DatetimeEvidence | None:
    """DT_R of a Memento; ``None`` means dismiss.

    The archival datetime is used when it falls in the event interval;
    otherwise an external lookup on the original URI, then archived
    ``Last-Modified`` X-headers.
    """
    raw = _header(response_headers, "Memento-Datetime")
    if raw is None:
        raise ProtocolError(f"no Memento-Datetime header for {memento.uri_m}")
    mdt = parse_datetime(raw)
    if mdt is None:
        raise ProtocolError(f"unparseable Memento-Datetime {raw!r}")
    if params.dt_e <= mdt <= params.dt_cp:
        return DatetimeEvidence(Source.MEMENTO_DATETIME, mdt)
    ext = from_external(memento.uri_r, lookup)
    if ext is not None:
        return DatetimeEvidence(Source.EXTERNAL_LOOKUP, ext)
    hdr = archived_last_modified(response_headers)
    if hdr is not None:
        return DatetimeEvidence(Source.ARCHIVED_HEADER, hdr)
    return None
