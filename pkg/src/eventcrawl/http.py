"""Minimal fetcher abstraction shared by the crawler and the Memento client.

Fetchers never follow redirects on their own; callers decide how to walk
a redirect chain so that TimeGate hops stay visible.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol
from urllib.parse import urljoin, urlsplit

from requests.structures import CaseInsensitiveDict

log = logging.getLogger(__name__)

MAX_REDIRECTS = 10
REDIRECT_CODES = frozenset({301, 302, 303, 307, 308})


class FetchError(Exception):
    """Transport-level failure: connection, timeout, or too many redirects."""


@dataclass
class Response:
    url: str
    status: int
    headers: CaseInsensitiveDict = field(default_factory=CaseInsensitiveDict)
    body: bytes = b""
    history: tuple[str, ...] = ()

    def __post_init__(self):
        if not isinstance(self.headers, CaseInsensitiveDict):
            self.headers = CaseInsensitiveDict(self.headers)

    @property
    def text(self) -> str:
        charset = "utf-8"
        ctype = self.headers.get("Content-Type", "")
        for part in ctype.split(";")[1:]:
            k, _, v = part.strip().partition("=")
            if k.lower() == "charset" and v:
                charset = v.strip('"')
        return self.body.decode(charset, errors="replace")

    @property
    def is_html(self) -> bool:
        ctype = self.headers.get("Content-Type")
        if ctype is None:
            return True
        return ctype.split(";")[0].strip().lower() in ("text/html", "application/xhtml+xml")


class Fetcher(Protocol):
    def fetch(self, uri: str, headers: Mapping[str, str] | None = None) -> Response: ...


class HostRateLimiter:
    """At most one request per host every ``delay`` seconds, across threads."""

    def __init__(self, delay: float = 0.0, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.delay = delay
        self.clock = clock
        self.sleep = sleep
        self._next: dict[str, float] = {}
        self._lock = threading.Lock()

    def wait(self, uri: str) -> None:
        if self.delay <= 0:
            return
        host = urlsplit(uri).hostname or ""
        with self._lock:
            now = self.clock()
            slot = max(now, self._next.get(host, now))
            self._next[host] = slot + self.delay
        if slot > now:
            self.sleep(slot - now)


class RequestsFetcher:
    """Fetcher over a ``requests`` session."""

    def __init__(self, timeout: float = 30.0, delay: float = 0.0, session=None,
                 user_agent: str = "eventcrawl/0.1", proxies: Mapping[str, str] | None = None):
        import requests

        self.session = session or requests.Session()
        self.session.headers.setdefault("User-Agent", user_agent)
        if proxies:
            # explicit proxies win over any *_PROXY environment variables
            self.session.trust_env = False
            self.session.proxies.update(proxies)
        self.timeout = timeout
        self.limiter = HostRateLimiter(delay)

    def fetch(self, uri: str, headers: Mapping[str, str] | None = None) -> Response:
        import requests

        self.limiter.wait(uri)
        try:
            r = self.session.get(uri, headers=dict(headers or {}), timeout=self.timeout,
                                 allow_redirects=False)
        except requests.RequestException as exc:
            raise FetchError(f"{uri}: {exc}") from exc
        return Response(uri, r.status_code, CaseInsensitiveDict(r.headers), r.content)


def fetch_following(fetcher: Fetcher, uri: str, headers: Mapping[str, str] | None = None,
                    max_redirects: int = MAX_REDIRECTS) -> Response:
    """Fetch ``uri`` and walk its redirect chain, keeping the visited URIs."""
    seen = []
    current = uri
    for _ in range(max_redirects + 1):
        resp = fetcher.fetch(current, headers)
        if resp.status not in REDIRECT_CODES or "Location" not in resp.headers:
            resp.history = tuple(seen)
            return resp
        seen.append(current)
        current = urljoin(current, resp.headers["Location"])
    raise FetchError(f"more than {max_redirects} redirects from {uri}")
