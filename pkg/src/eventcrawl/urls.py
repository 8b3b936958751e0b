"""URI normalization and outlink extraction."""

from __future__ import annotations

from urllib.parse import parse_qsl, urlencode, urljoin, urlsplit, urlunsplit

from bs4 import BeautifulSoup

DEFAULT_PORTS = {"http": 80, "https": 443}


def _remove_dot_segments(path: str) -> str:
    # RFC 3986, section 5.2.4
    out: list[str] = []
    while path:
        if path.startswith("../"):
            path = path[3:]
        elif path.startswith("./"):
            path = path[2:]
        elif path.startswith("/./"):
            path = path[2:]
        elif path == "/.":
            path = "/"
        elif path.startswith("/../"):
            path = path[3:]
            if out:
                out.pop()
        elif path == "/..":
            path = "/"
            if out:
                out.pop()
        elif path in (".", ".."):
            path = ""
        else:
            start = 1 if path.startswith("/") else 0
            i = path.find("/", start)
            if i < 0:
                i = len(path)
            out.append(path[:i])
            path = path[i:]
    return "".join(out)


def normalize_uri(uri: str) -> str:
    """Canonical form used for deduplication.

    Lowercases scheme and host, drops the fragment, default port and
    ``utm_*`` parameters, and resolves dot segments.
    """
    try:
        parts = urlsplit(uri.strip())
        port = parts.port
    except ValueError as exc:
        raise ValueError(f"unparseable URI {uri!r}") from exc
    if not parts.scheme or not parts.netloc:
        raise ValueError(f"relative URI {uri!r}")
    scheme = parts.scheme.lower()
    host = (parts.hostname or "").lower()
    if not host:
        raise ValueError(f"URI without host {uri!r}")
    netloc = host
    if ":" in host:
        netloc = f"[{host}]"
    if port is not None and DEFAULT_PORTS.get(scheme) != port:
        netloc = f"{netloc}:{port}"
    if parts.username is not None:
        auth = parts.username + (f":{parts.password}" if parts.password is not None else "")
        netloc = f"{auth}@{netloc}"
    path = _remove_dot_segments(parts.path) or "/"
    query = parts.query
    if query:
        kept = [(k, v) for k, v in parse_qsl(query, keep_blank_values=True)
                if not k.lower().startswith("utm_")]
        query = urlencode(kept, safe="/:@!$'()*+,;") if len(kept) != len(parse_qsl(query, keep_blank_values=True)) else query
    return urlunsplit((scheme, netloc, path, query, ""))


def extract_outlinks(html: str, base_uri: str) -> list[str]:
    """Normalized, deduplicated HTTP(S) anchor targets in document order."""
    if not html:
        return []
    soup = BeautifulSoup(html, "lxml")
    base_tag = soup.find("base", href=True)
    base = urljoin(base_uri, base_tag["href"]) if base_tag else base_uri
    try:
        here = normalize_uri(base_uri)
    except ValueError:
        here = None
    seen = set()
    out = []
    for a in soup.find_all("a", href=True):
        href = a["href"].strip()
        if not href or href.startswith("#"):
            continue
        try:
            target = urljoin(base, href)
            if urlsplit(target).scheme.lower() not in DEFAULT_PORTS:
                continue
            target = normalize_uri(target)
        except ValueError:
            continue
        if target == here or target in seen:
            continue
        seen.add(target)
        out.append(target)
    return out
