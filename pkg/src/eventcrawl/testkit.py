"""Offline web and web-archive fixtures.

:class:`LiveFetcher` answers for the live web of a :class:`FixtureSite`;
:class:`ArchiveFetcher` plays an aggregator TimeGate/TimeMap plus any
number of archives holding rewritten snapshots.  Both are plain
in-process fetchers; :func:`serve_http` exposes either one as an HTTP
proxy so the ``requests``-based fetcher can be exercised as well.
"""

from __future__ import annotations

import contextlib
import html as html_lib
import json
import random
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Iterator, Mapping, Sequence
from urllib.parse import urljoin

from bs4 import BeautifulSoup
from dateutil.parser import isoparse

from .content import IdfTable, build_term_vector
from .event_setup import EventSpec
from .http import FetchError, Response
from .memento import Link, MementoClient, format_http_date, format_link_header, parse_http_date
from .urls import normalize_uri

UTC = timezone.utc
TIMEGATE = "http://timegate.test/timegate/"
TIMEMAP = "http://timegate.test/timemap/link/"
HOP = "http://timegate.test/hop/"



def ts14(dt: datetime) -> str:
    return dt.astimezone(UTC).strftime("%Y%m%d%H%M%S")


def _iso(dt: datetime | None) -> str | None:
    return None if dt is None else dt.astimezone(UTC).isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class Page:
    html: str
    published: datetime | None = None
    outlinks: tuple[str, ...] = ()
    content_type: str = "text/html; charset=utf-8"
    redirect: str | None = None


@dataclass(frozen=True)
class Snapshot:
    datetime: datetime
    archive: str
    html: str | None = None  # None: the live page body
    headers: tuple[tuple[str, str], ...] = ()


@dataclass
class FixtureSite:
    pages: dict[str, Page] = field(default_factory=dict)
    snapshots: dict[str, list[Snapshot]] = field(default_factory=dict)
    external: frozenset[str] = frozenset()
    timegate_hops: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.pages = {normalize_uri(u): p for u, p in self.pages.items()}
        self.snapshots = {normalize_uri(u): sorted(s, key=lambda x: x.datetime)
                          for u, s in self.snapshots.items()}
        self.external = frozenset(normalize_uri(u) for u in self.external)
        self.timegate_hops = {normalize_uri(u): n for u, n in self.timegate_hops.items()}
        for uri, page in self.pages.items():
            for link in page.outlinks:
                if normalize_uri(link) not in self.pages and normalize_uri(link) not in self.external:
                    raise ValueError(f"{uri} links to {link}, which is neither a page nor external")

    def snapshot_body(self, uri: str, snap: Snapshot) -> str:
        if snap.html is not None:
            return snap.html
        return self.pages[uri].html

    # -- JSON fixture format -------------------------------------------

    def to_json(self) -> dict:
        return {
            "pages": {
                u: {"html": p.html, "published": _iso(p.published), "outlinks": list(p.outlinks),
                    "content_type": p.content_type, "redirect": p.redirect}
                for u, p in sorted(self.pages.items())
            },
            "snapshots": {
                u: [{"datetime": _iso(s.datetime), "archive": s.archive, "html": s.html,
                     "headers": dict(s.headers)} for s in snaps]
                for u, snaps in sorted(self.snapshots.items())
            },
            "external": sorted(self.external),
            "timegate_hops": dict(sorted(self.timegate_hops.items())),
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "FixtureSite":
        pages = {
            u: Page(p["html"], isoparse(p["published"]) if p.get("published") else None,
                    tuple(p.get("outlinks", ())), p.get("content_type", "text/html; charset=utf-8"),
                    p.get("redirect"))
            for u, p in d.get("pages", {}).items()
        }
        snaps = {
            u: [Snapshot(isoparse(s["datetime"]), s["archive"], s.get("html"),
                         tuple(sorted(s.get("headers", {}).items()))) for s in lst]
            for u, lst in d.get("snapshots", {}).items()
        }
        return cls(pages, snaps, frozenset(d.get("external", ())), dict(d.get("timegate_hops", {})))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True, ensure_ascii=False) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FixtureSite":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


class _Recording:
    def __init__(self):
        self.requests: list[tuple[str, dict]] = []
        self._lock = threading.Lock()

    def _note(self, uri, headers):
        with self._lock:
            self.requests.append((uri, dict(headers or {})))


def _html_response(uri: str, body: str, headers: Mapping[str, str] | None = None,
                   status: int = 200) -> Response:
    h = {"Content-Type": "text/html; charset=utf-8"}
    h.update(headers or {})
    return Response(uri, status, h, body.encode("utf-8"))


def _not_found(uri: str, why: str = "not found") -> Response:
    return _html_response(uri, f"<html><body><p>{why}</p></body></html>", status=404)


class LiveFetcher(_Recording):
    """The live web of a fixture site; unknown URIs answer 404."""

    def __init__(self, site: FixtureSite):
        super().__init__()
        self.site = site

    def fetch(self, uri: str, headers: Mapping[str, str] | None = None) -> Response:
        self._note(uri, headers)
        try:
            key = normalize_uri(uri)
        except ValueError as exc:
            raise FetchError(str(exc)) from exc
        page = self.site.pages.get(key)
        if page is None:
            return _not_found(uri)
        if page.redirect:
            return Response(uri, 301, {"Location": page.redirect}, b"")
        return Response(uri, 200, {"Content-Type": page.content_type}, page.html.encode("utf-8"))


def serve_live(site: FixtureSite) -> LiveFetcher:
    return LiveFetcher(site)


@dataclass(frozen=True)
class _Held:
    uri_r: str
    snap: Snapshot

    @property
    def uri_m(self) -> str:
        return f"http://{self.snap.archive}/web/{ts14(self.snap.datetime)}/{self.uri_r}"


class ArchiveFetcher(_Recording):
    """Aggregator TimeGate/TimeMap and the archives behind it.

    Negotiation picks the snapshot closest to Accept-Datetime over all
    archives; an exact midpoint goes to the earlier snapshot.  With
    ``policy="prior"`` it instead picks the latest snapshot at or before
    Accept-Datetime (the earliest one if none is), as some archives do.  Memento
    responses carry Memento-Datetime and original/timegate/timemap plus
    first/prev/next/last memento links, and their outlinks are rewritten
    into the same archive with a banner link to the archive's home page.
    """

    def __init__(self, site: FixtureSite, timegate: str = TIMEGATE, timemap: str = TIMEMAP,
                 failures: Mapping[str, int] | None = None, policy: str = "closest"):
        super().__init__()
        if policy not in ("closest", "prior"):
            raise ValueError("policy must be 'closest' or 'prior'")
        self.policy = policy
        self.site = site
        self.timegate = timegate
        self.timemap = timemap
        self._held: dict[str, list[_Held]] = {
            uri: [_Held(uri, s) for s in snaps] for uri, snaps in site.snapshots.items() if snaps
        }
        self._by_urim = {h.uri_m: h for lst in self._held.values() for h in lst}
        self._failures = dict(failures or {})

    def client(self, **kwargs) -> MementoClient:
        """A Memento client pointed at this fixture's TimeGate."""
        return MementoClient(self, self.timegate, self.timemap, **kwargs)

    def fetch(self, uri: str, headers: Mapping[str, str] | None = None) -> Response:
        self._note(uri, headers)
        with self._lock:
            if self._failures.get(uri, 0) > 0:
                self._failures[uri] -= 1
                return _html_response(uri, "<p>busy</p>", status=503)
        headers = {k.lower(): v for k, v in (headers or {}).items()}
        if uri.startswith(self.timegate):
            return self._timegate(uri, uri[len(self.timegate):], headers, hops=None)
        if uri.startswith(HOP):
            n, _, rest = uri[len(HOP):].partition("/")
            return self._timegate(uri, rest, headers, hops=int(n) - 1)
        if uri.startswith(self.timemap):
            return self._timemap(uri, uri[len(self.timemap):])
        held = self._by_urim.get(uri)
        if held is not None:
            return self._memento(held)
        return _not_found(uri)

    def _lookup(self, raw: str) -> tuple[str, list[_Held]]:
        try:
            key = normalize_uri(raw)
        except ValueError:
            return raw, []
        return key, self._held.get(key, [])

    def _timegate(self, uri: str, raw: str, headers: Mapping[str, str], hops: int | None) -> Response:
        key, held = self._lookup(raw)
        if not held:
            return _not_found(uri, "not archived")
        if hops is None:
            hops = self.site.timegate_hops.get(key, 0)
        if hops > 0:
            return Response(uri, 302, {"Location": f"{HOP}{hops}/{key}"}, b"")
        if "accept-datetime" in headers:
            try:
                pref = parse_http_date(headers["accept-datetime"])
            except ValueError:
                return _html_response(uri, "<p>bad Accept-Datetime</p>", status=400)
            if self.policy == "prior":
                before = [h for h in held if h.snap.datetime <= pref]
                best = before[-1] if before else held[0]
            else:
                best = min(held, key=lambda h: (abs(h.snap.datetime - pref), h.snap.datetime))
        else:
            best = held[-1]
        links = [Link(key, (("rel", "original"),)),
                 Link(self.timemap + key, (("rel", "timemap"), ("type", "application/link-format")))]
        return Response(uri, 302, {"Location": best.uri_m, "Vary": "accept-datetime",
                                   "Link": format_link_header(links)}, b"")

    def _timemap(self, uri: str, raw: str) -> Response:
        key, held = self._lookup(raw)
        if not held:
            return _not_found(uri, "not archived")
        links = [Link(key, (("rel", "original"),)),
                 Link(self.timemap + key, (("rel", "self"), ("type", "application/link-format"))),
                 Link(self.timegate + key, (("rel", "timegate"),))]
        for h in held:
            links.append(Link(h.uri_m, (("rel", "memento"),
                                        ("datetime", format_http_date(h.snap.datetime)))))
        body = format_link_header(links, sep=",\n") + "\n"
        return Response(uri, 200, {"Content-Type": "application/link-format"}, body.encode("utf-8"))

    def _neighbour_links(self, held: _Held) -> list[Link]:
        lst = self._held[held.uri_r]
        i = lst.index(held)
        rels: dict[int, list[str]] = {}
        for j, name in ((0, "first"), (i - 1, "prev"), (i, None), (i + 1, "next"), (len(lst) - 1, "last")):
            if 0 <= j < len(lst):
                rels.setdefault(j, [])
                if name and name not in rels[j]:
                    rels[j].append(name)
        out = []
        for j in sorted(rels):
            words = rels[j] + ["memento"]
            out.append(Link(lst[j].uri_m, (("rel", " ".join(words)),
                                           ("datetime", format_http_date(lst[j].snap.datetime)))))
        return out

    def _rewrite(self, body: str, held: _Held) -> str:
        soup = BeautifulSoup(body, "lxml")
        prefix = f"http://{held.snap.archive}/web/{ts14(held.snap.datetime)}/"
        for a in soup.find_all("a", href=True):
            href = a["href"].strip()
            if not href or href.startswith("#"):
                continue
            target = urljoin(held.uri_r, href)
            if target.startswith(("http://", "https://")):
                a["href"] = prefix + target
        banner = soup.new_tag("div", id="archive-banner")
        link = soup.new_tag("a", href=f"http://{held.snap.archive}/")
        link.string = "archive home"
        banner.append(link)
        (soup.body or soup).insert(0, banner)
        return str(soup)

    def _memento(self, held: _Held) -> Response:
        links = [Link(held.uri_r, (("rel", "original"),)),
                 Link(self.timegate + held.uri_r, (("rel", "timegate"),)),
                 Link(self.timemap + held.uri_r, (("rel", "timemap"), ("type", "application/link-format")))]
        links += self._neighbour_links(held)
        headers = {"Memento-Datetime": format_http_date(held.snap.datetime),
                   "Link": format_link_header(links)}
        headers.update(dict(held.snap.headers))
        body = self._rewrite(self.site.snapshot_body(held.uri_r, held.snap), held)
        return _html_response(held.uri_m, body, headers)


def serve_archive(site: FixtureSite, **kwargs) -> ArchiveFetcher:
    return ArchiveFetcher(site, **kwargs)


@contextlib.contextmanager
def serve_http(fetcher) -> Iterator[str]:
    """Run ``fetcher`` behind a local HTTP proxy; yields the proxy URL."""

    class Handler(BaseHTTPRequestHandler):
        def do_GET(self):
            hdrs = {k: v for k, v in self.headers.items()
                    if k.lower() not in ("host", "connection", "proxy-connection", "accept-encoding",
                                         "user-agent", "accept")}
            try:
                resp = fetcher.fetch(self.path, hdrs)
            except FetchError:
                self.send_error(502)
                return
            self.send_response(resp.status)
            for k, v in resp.headers.items():
                self.send_header(k, v)
            self.send_header("Content-Length", str(len(resp.body)))
            self.end_headers()
            self.wfile.write(resp.body)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        server.server_close()


class FakeClock:
    """Deterministic wall clock advancing by ``step`` on every reading."""

    def __init__(self, start: datetime = datetime(2017, 12, 1, tzinfo=UTC),
                 step: timedelta = timedelta(seconds=1)):
        self.now = start
        self.step = step
        self._lock = threading.Lock()

    def __call__(self) -> datetime:
        with self._lock:
            t = self.now
            self.now += self.step
            return t


# -- synthetic events ------------------------------------------------------

EVENT_TEXT = ("gunman opened fire at a constituent meeting outside a grocery store "
              "wounding the congresswoman and killing six people including a federal judge")
NOISE_TEXT = ("recipe for lemon cake with butter sugar flour eggs baking powder vanilla "
              "glaze served chilled on summer afternoons beside fresh berries")
DT_E = datetime(2011, 1, 8, 17, 10, tzinfo=UTC)
DT_CP = datetime(2012, 1, 12, tzinfo=UTC)
ARCHIVES = ("archive-a.test", "archive-b.test", "archive-c.test")


def render_page(text: str, outlinks: Sequence[str] = (), published: datetime | None = None) -> str:
    meta = ""
    if published is not None:
        meta = f'<meta itemprop="datePublished" content="{_iso(published)}"/>'
    items = "".join(f'<li><a href="{html_lib.escape(u)}">link</a></li>' for u in outlinks)
    nav = f"<ul>{items}</ul>" if items else ""
    return (f"<html><head>{meta}</head><body><p>{html_lib.escape(text)}</p>"
            f"{nav}</body></html>")


def synthetic_spec(seeds: Sequence[str], max_depth: int, th_cont: float = 0.6,
                   th_temp: float = 0.9, text: str = EVENT_TEXT) -> EventSpec:
    return EventSpec(
        name="synthetic",
        dt_e=DT_E,
        dt_cp=DT_CP,
        dt_upper=DT_CP,
        seeds=tuple(seeds),
        event_vector=build_term_vector(text, IdfTable.uniform()),
        th_cont=th_cont,
        th_temp=th_temp,
        grace_live=timedelta(days=30),
        grace_archive=timedelta(days=30),
        max_depth=max_depth,
    )


@dataclass(frozen=True)
class Expected:
    records: frozenset[str]
    accepted: frozenset[str]
    dismissed: Mapping[str, str]


@dataclass
class SyntheticEvent:
    site: FixtureSite
    spec: EventSpec
    expected: dict[str, Expected]
    depth_of: dict[str, int]


PROFILES = ("all_relevant", "cliff", "pre_event_only")


def build_synthetic_event(profile: str = "all_relevant", n_seeds: int = 3, fanout: int = 2,
                          max_depth: int = 3, cliff_depth: int = 1) -> SyntheticEvent:
    """A tree-shaped site whose crawl outcome follows from its construction.

    Every seed roots a ``fanout``-ary tree one level deeper than
    ``max_depth`` plus one undated leaf.  Children link back to their
    parent.  Relevant pages repeat the event text verbatim and are dated
    inside the event interval (R_cont 1, R_temp 1); irrelevant pages use a
    disjoint vocabulary (R_cont 0, R_temp 1, so R_aggr 0.5 < 0.75).
    Snapshots rotate over three archives; odd pages hold a pre-event
    snapshot closer to DT_E than their post-event one, forcing a
    ``next memento`` hop.  Undated leaves are archived only after the
    interval so they are dismissed in both modes.

    ``cliff`` makes pages deeper than ``cliff_depth`` irrelevant;
    ``pre_event_only`` archives every page only before DT_E.
    """
    if profile not in PROFILES:
        raise ValueError(f"profile must be one of {PROFILES}")
    if n_seeds < 1 or fanout < 1 or max_depth < 0:
        raise ValueError("n_seeds, fanout must be >= 1 and max_depth >= 0")
    if profile == "cliff" and not 0 <= cliff_depth < max_depth:
        raise ValueError("cliff_depth must lie in [0, max_depth)")

    nodes: dict[str, dict] = {}

    def add(uri, depth, parent, kind):
        nodes[uri] = {"depth": depth, "parent": parent, "kind": kind, "children": []}
        if parent:
            nodes[parent]["children"].append(uri)

    seeds = []
    for s in range(n_seeds):
        root = f"http://news{s}.example/story/s{s}"
        seeds.append(root)
        add(root, 0, None, "page")
        level = [root]
        for depth in range(1, max_depth + 2):
            nxt = []
            for parent in level:
                for c in range(fanout):
                    uri = f"{parent}-{c}"
                    add(uri, depth, parent, "page")
                    nxt.append(uri)
            level = nxt
        add(f"http://blog{s}.example/undated/s{s}", 1, root, "undated")

    def relevant(uri):
        n = nodes[uri]
        if n["kind"] == "undated":
            return True
        return profile != "cliff" or n["depth"] <= cliff_depth

    pages, snapshots = {}, {}
    for i, uri in enumerate(sorted(nodes)):
        n = nodes[uri]
        links = list(n["children"]) + ([n["parent"]] if n["parent"] else [])
        text = EVENT_TEXT if relevant(uri) else NOISE_TEXT
        published = None if n["kind"] == "undated" else DT_E + timedelta(days=2 + i % 5)
        pages[uri] = Page(render_page(text, links, published), published, tuple(links))
        archive = ARCHIVES[i % len(ARCHIVES)]
        if profile == "pre_event_only":
            snapshots[uri] = [Snapshot(DT_E - timedelta(days=10), archive)]
        elif n["kind"] == "undated":
            snapshots[uri] = [Snapshot(DT_CP + timedelta(days=400), archive)]
        elif i % 2:
            snapshots[uri] = [Snapshot(DT_E - timedelta(days=2), archive),
                              Snapshot(DT_E + timedelta(days=3), ARCHIVES[(i + 1) % len(ARCHIVES)])]
        else:
            snapshots[uri] = [Snapshot(DT_E + timedelta(days=1), archive)]
    site = FixtureSite(pages, snapshots)
    spec = synthetic_spec(seeds, max_depth)

    expected = {}
    for mode in ("live", "archive"):
        records, accepted, dismissed = set(), set(), {}
        frontier = list(seeds)
        while frontier:
            uri = frontier.pop()
            records.add(uri)
            n = nodes[uri]
            if mode == "archive" and profile == "pre_event_only":
                dismissed[uri] = "not_archived"
                continue
            if n["kind"] == "undated":
                dismissed[uri] = "no_datetime"
                continue
            if not relevant(uri):
                continue
            accepted.add(uri)
            if n["depth"] < max_depth:
                frontier.extend(c for c in n["children"] if c not in records)
        expected[mode] = Expected(frozenset(records), frozenset(accepted), dismissed)
    return SyntheticEvent(site, spec, expected, {u: n["depth"] for u, n in nodes.items()})


def build_random_site(n_pages: int = 1200, seed: int = 0, min_links: int = 3,
                      max_links: int = 6) -> tuple[FixtureSite, EventSpec]:
    """A random link graph whose pages mix event and noise words.

    Every page is dated inside the interval and accepted, but content
    overlap (hence R_aggr and child priority) varies from page to page.
    """
    rng = random.Random(seed)
    event_words = EVENT_TEXT.split()
    noise_words = NOISE_TEXT.split()
    uris = [f"http://site{i % 37}.example/a/{i}" for i in range(n_pages)]
    pages = {}
    for i, uri in enumerate(uris):
        k = rng.randint(6, len(event_words))
        words = rng.sample(event_words, k) + rng.sample(noise_words, rng.randint(0, 12))
        rng.shuffle(words)
        links = rng.sample(uris, rng.randint(min_links, max_links))
        links = [u for u in links if u != uri]
        published = DT_E + timedelta(hours=rng.randint(1, 2000))
        pages[uri] = Page(render_page(" ".join(words), links, published), published, tuple(links))
    spec = synthetic_spec(uris[:5], max_depth=50, th_cont=0.2, th_temp=0.9)
    return FixtureSite(pages), spec
