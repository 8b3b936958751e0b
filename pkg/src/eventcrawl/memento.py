"""Memento protocol client (RFC 7089) and Link header handling (RFC 8288).

The client negotiates against a TimeGate (normally an aggregator) with
the event datetime as the preferred datetime.  When the selected Memento
predates it, one ``next memento`` hop yields the first Memento at or
after the preferred datetime.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from datetime import datetime
from email.utils import format_datetime, parsedate_to_datetime
from typing import Iterable
from urllib.parse import urljoin, urlsplit

from .dates import ProtocolError, to_utc
from .http import MAX_REDIRECTS, REDIRECT_CODES, FetchError, Fetcher, Response

log = logging.getLogger(__name__)

DEFAULT_TIMEGATE = "http://timetravel.mementoweb.org/timegate/"
DEFAULT_TIMEMAP = "http://timetravel.mementoweb.org/timemap/link/"


class MementoError(Exception):
    pass


class NotArchived(MementoError):
    """No archive holds a Memento of the resource."""


class NoPostEventMemento(MementoError):
    """Only Mementos older than the preferred datetime exist."""


class LinkHeaderError(ValueError):
    pass


# -- Link headers ----------------------------------------------------------

@dataclass(frozen=True)
class Link:
    target: str
    params: tuple[tuple[str, str | None], ...] = ()

    def param(self, name: str) -> str | None:
        for k, v in self.params:
            if k == name:
                return v
        return None

    @property
    def rels(self) -> tuple[str, ...]:
        return tuple((self.param("rel") or "").lower().split())

    @property
    def datetime(self) -> datetime | None:
        raw = self.param("datetime")
        return None if raw is None else parse_http_date(raw)

    def has_rel(self, rel: str) -> bool:
        return rel in self.rels


class LinkRelations(tuple):
    """Parsed Link header: an ordered tuple of :class:`Link`."""

    def __new__(cls, links: Iterable[Link] = ()):
        return super().__new__(cls, tuple(links))

    def with_rel(self, rel: str) -> list[Link]:
        return [link for link in self if link.has_rel(rel)]

    def first(self, rel: str) -> Link | None:
        found = self.with_rel(rel)
        return found[0] if found else None

    def __add__(self, other):
        return LinkRelations(tuple(self) + tuple(other))


def parse_http_date(value: str) -> datetime:
    try:
        dt = parsedate_to_datetime(value)
    except (TypeError, ValueError, IndexError):
        dt = None
    if dt is None:
        raise LinkHeaderError(f"not an RFC 1123 datetime: {value!r}")
    return to_utc(dt)


def format_http_date(dt: datetime) -> str:
    return format_datetime(to_utc(dt), usegmt=True)


_TOKEN = re.compile(r"[!#$%&'*+\-.^_`|~0-9A-Za-z]+")
_WS = re.compile(r"[ \t\r\n]*")


def _fail(value: str, pos: int, what: str):
    snippet = value[pos:pos + 30]
    raise LinkHeaderError(f"{what} at offset {pos}: {snippet!r}")


def parse_link_header(value: str) -> LinkRelations:
    """Parse a Link header or link-format document into ordered links."""
    links = []
    pos, n = 0, len(value or "")
    while pos < n:
        pos = _WS.match(value, pos).end()
        if pos < n and value[pos] == ",":
            pos += 1
            continue
        if pos >= n:
            break
        if value[pos] != "<":
            _fail(value, pos, "expected '<'")
        end = value.find(">", pos)
        if end < 0:
            _fail(value, pos, "unterminated URI reference")
        target = value[pos + 1:end].strip()
        pos = end + 1
        params = []
        while True:
            pos = _WS.match(value, pos).end()
            if pos >= n or value[pos] == ",":
                break
            if value[pos] != ";":
                _fail(value, pos, "expected ';' or ','")
            pos = _WS.match(value, pos + 1).end()
            m = _TOKEN.match(value, pos)
            if not m:
                if pos >= n or value[pos] in ",;":
                    continue  # empty parameter, tolerated
                _fail(value, pos, "expected parameter name")
            name = m.group().lower()
            pos = _WS.match(value, m.end()).end()
            pval = None
            if pos < n and value[pos] == "=":
                pos = _WS.match(value, pos + 1).end()
                if pos < n and value[pos] == '"':
                    buf = []
                    pos += 1
                    while pos < n and value[pos] != '"':
                        if value[pos] == "\\" and pos + 1 < n:
                            pos += 1
                        buf.append(value[pos])
                        pos += 1
                    if pos >= n:
                        _fail(value, pos, "unterminated quoted string")
                    pos += 1
                    pval = "".join(buf)
                else:
                    m = _TOKEN.match(value, pos)
                    if not m:
                        _fail(value, pos, "expected parameter value")
                    pval = m.group()
                    pos = m.end()
            params.append((name, pval))
        link = Link(target, tuple(params))
        if not link.rels:
            _fail(value, pos, f"link <{target}> has no rel")
        if link.param("datetime") is not None:
            link.datetime  # validates
        links.append(link)
    return LinkRelations(links)


def _quote(v: str) -> str:
    return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_link_header(links: Iterable[Link], sep: str = ", ") -> str:
    out = []
    for link in links:
        parts = [f"<{link.target}>"]
        for k, v in link.params:
            parts.append(k if v is None else f"{k}={_quote(v)}")
        out.append("; ".join(parts))
    return sep.join(out)


# -- Mementos --------------------------------------------------------------

_SECOND_LEVEL = frozenset({"co", "com", "org", "net", "ac", "gov", "edu", "or", "ne", "go"})


def archive_id(uri: str) -> str:
    """Registrable domain of an archive host (approximate public suffix rule)."""
    host = (urlsplit(uri).hostname or "").lower().rstrip(".")
    labels = host.split(".")
    if len(labels) <= 2 or re.fullmatch(r"[\d.]+", host):
        return host
    if len(labels[-1]) == 2 and labels[-2] in _SECOND_LEVEL:
        return ".".join(labels[-3:])
    return ".".join(labels[-2:])


@dataclass(frozen=True)
class Memento:
    uri_m: str
    uri_r: str
    memento_datetime: datetime
    archive_id: str

    def __post_init__(self):
        if self.uri_m == self.uri_r:
            raise ValueError("URI-M must differ from URI-R")

    @classmethod
    def make(cls, uri_m: str, uri_r: str, memento_datetime: datetime) -> "Memento":
        return cls(uri_m, uri_r, to_utc(memento_datetime), archive_id(uri_m))


# Rewriting schemes that embed the original URI after a 8-14 digit
# timestamp (Wayback, Archive-It, archive.today long form, pywb, ...).
# Extend this list for other archives.
URIM_PATTERNS = [
    re.compile(r"^https?://[^/]+(?:/[^/?#]*)*?/(\d{8,14})(?:[a-z]{2}_|id_)?/+"
               r"((?:https?:/{1,2}|www\.).+)$", re.I),
]


def original_from_urim(uri_m: str) -> str | None:
    for pattern in URIM_PATTERNS:
        m = pattern.match(uri_m)
        if m:
            orig = m.group(2)
            orig = re.sub(r"^(https?):/(?!/)", r"\1://", orig, flags=re.I)
            if orig.lower().startswith("www."):
                orig = "http://" + orig
            return orig
    return None


def resolve_urir(response: Response) -> str:
    """Original URI for a Memento response, from Link rel="original" or the URI-M."""
    header = response.headers.get("Link")
    if header:
        original = parse_link_header(header).first("original")
        if original is not None:
            return urljoin(response.url, original.target)
    orig = original_from_urim(response.url)
    if orig is None:
        raise MementoError(f"cannot resolve original for {response.url}")
    return orig


def parse_timemap(body: str) -> list[Memento]:
    links = parse_link_header(body)
    original = links.first("original")
    mementos = []
    for link in links.with_rel("memento"):
        if original is None:
            raise LinkHeaderError("TimeMap lists mementos but no rel=\"original\"")
        dt = link.datetime
        if dt is None:
            raise LinkHeaderError(f"memento <{link.target}> has no datetime")
        mementos.append(Memento.make(link.target, original.target, dt))
    mementos.sort(key=lambda m: m.memento_datetime)
    return mementos


class MementoClient:
    """TimeGate negotiation against a configurable aggregator endpoint.

    Safe to share between worker threads if the fetcher is.
    """

    def __init__(self, fetcher: Fetcher, timegate: str = DEFAULT_TIMEGATE,
                 timemap: str = DEFAULT_TIMEMAP, retries: int = 2,
                 max_redirects: int = MAX_REDIRECTS):
        self.fetcher = fetcher
        self.timegate = timegate
        self.timemap_endpoint = timemap
        self.retries = retries
        self.max_redirects = max_redirects

    def _get(self, uri: str, headers=None) -> Response:
        last = None
        for attempt in range(self.retries + 1):
            try:
                resp = self.fetcher.fetch(uri, headers)
            except FetchError as exc:
                last = exc
                log.debug("attempt %d for %s failed: %s", attempt + 1, uri, exc)
                continue
            if resp.status >= 500:
                last = FetchError(f"{uri}: HTTP {resp.status}")
                continue
            return resp
        raise last

    def _walk(self, uri: str, headers=None) -> tuple[Response, LinkRelations]:
        links = LinkRelations()
        current = uri
        seen = []
        for _ in range(self.max_redirects + 1):
            resp = self._get(current, headers)
            if "Link" in resp.headers:
                links = links + parse_link_header(resp.headers["Link"])
            if resp.status in REDIRECT_CODES and "Location" in resp.headers:
                seen.append(current)
                current = urljoin(current, resp.headers["Location"])
                continue
            resp.history = tuple(seen)
            return resp, links
        raise FetchError(f"more than {self.max_redirects} redirects from {uri}")

    def _memento_from(self, resp: Response, links: LinkRelations, uri_r: str) -> Memento:
        raw = resp.headers.get("Memento-Datetime")
        if raw is None:
            raise ProtocolError(f"{resp.url} answered without Memento-Datetime")
        original = links.first("original")
        orig = urljoin(resp.url, original.target) if original else uri_r
        return Memento.make(resp.url, orig, parse_http_date(raw))

    def fetch_memento(self, uri_r: str, preferred: datetime) -> tuple[Memento, Response]:
        """Negotiate and fetch the first Memento at or after ``preferred``."""
        preferred = to_utc(preferred)
        accept = {"Accept-Datetime": format_http_date(preferred)}
        resp, links = self._walk(self.timegate + uri_r, accept)
        if resp.status == 404 or resp.status == 410:
            raise NotArchived(uri_r)
        if resp.status != 200:
            raise ProtocolError(f"TimeGate answered HTTP {resp.status} for {uri_r}")
        memento = self._memento_from(resp, links, uri_r)
        if memento.memento_datetime >= preferred:
            return memento, resp
        # the memento's own links describe its neighbours most precisely
        own = parse_link_header(resp.headers.get("Link", ""))
        nxt = own.first("next") or links.first("next")
        if nxt is None:
            raise NoPostEventMemento(uri_r)
        resp2, links2 = self._walk(urljoin(resp.url, nxt.target))
        if resp2.status != 200:
            raise NoPostEventMemento(f"{uri_r}: next memento answered HTTP {resp2.status}")
        memento2 = self._memento_from(resp2, links2, uri_r)
        if memento2.memento_datetime < preferred:
            raise NoPostEventMemento(uri_r)
        return memento2, resp2

    def timegate_negotiate(self, uri_r: str, preferred: datetime) -> Memento:
        return self.fetch_memento(uri_r, preferred)[0]

    def timemap(self, uri_r: str) -> list[Memento]:
        resp, _ = self._walk(self.timemap_endpoint + uri_r)
        if resp.status == 404:
            raise NotArchived(uri_r)
        return parse_timemap(resp.text)
