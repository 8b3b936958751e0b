import threading
from datetime import datetime, timezone

import pytest

from eventcrawl.http import FetchError, HostRateLimiter, RequestsFetcher, Response, fetch_following
from eventcrawl.testkit import FixtureSite, Page, Snapshot, serve_archive, serve_http, serve_live

UTC = timezone.utc


def small_site():
    return FixtureSite(
        {
            "http://a.example/": Page("<html><body><p>home</p></body></html>"),
            "http://a.example/old": Page("", redirect="http://a.example/new"),
            "http://a.example/new": Page("", redirect="/"),
            "http://a.example/loop": Page("", redirect="http://a.example/loop"),
            "http://a.example/doc.pdf": Page("%PDF-1.4", content_type="application/pdf"),
        },
        {"http://a.example/": [Snapshot(datetime(2011, 1, 10, tzinfo=UTC), "arch.test")]},
    )


class FakeTime:
    def __init__(self):
        self.t = 0.0
        self.slept = []
        self.lock = threading.Lock()

    def clock(self):
        return self.t

    def sleep(self, s):
        self.slept.append(s)


class TestResponse:
    def test_charset(self):
        r = Response("u", 200, {"content-type": "text/html; charset=iso-8859-1"}, "café".encode("latin-1"))
        assert r.text == "café"
        assert r.is_html

    def test_non_html(self):
        assert not Response("u", 200, {"Content-Type": "application/pdf"}).is_html
        assert Response("u", 200, {}).is_html


class TestFollowing:
    def test_chain(self):
        r = fetch_following(serve_live(small_site()), "http://a.example/old")
        assert r.status == 200
        assert r.history == ("http://a.example/old", "http://a.example/new")
        assert r.url == "http://a.example/"

    def test_loop(self):
        with pytest.raises(FetchError, match="redirects"):
            fetch_following(serve_live(small_site()), "http://a.example/loop")


class TestRateLimiter:
    def test_same_host_spaced(self):
        ft = FakeTime()
        lim = HostRateLimiter(2.0, ft.clock, ft.sleep)
        for _ in range(3):
            lim.wait("http://arch.test/a")
        assert ft.slept == [2.0, 4.0]

    def test_hosts_independent(self):
        ft = FakeTime()
        lim = HostRateLimiter(2.0, ft.clock, ft.sleep)
        lim.wait("http://a.test/")
        lim.wait("http://b.test/")
        assert ft.slept == []

    def test_threads_never_share_a_slot(self):
        ft = FakeTime()
        lim = HostRateLimiter(1.0, ft.clock, ft.sleep)
        threads = [threading.Thread(target=lim.wait, args=("http://a.test/x",)) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(ft.slept) == [float(i) for i in range(1, 8)]

    def test_disabled(self):
        ft = FakeTime()
        HostRateLimiter(0.0, ft.clock, ft.sleep).wait("http://a/")
        assert ft.slept == []


class TestRequestsFetcher:
    def test_through_proxy(self):
        with serve_http(serve_live(small_site())) as proxy:
            f = RequestsFetcher(timeout=5, proxies={"http": proxy})
            r = f.fetch("http://a.example/")
            assert r.status == 200 and b"home" in r.body
            r = f.fetch("http://a.example/old")
            assert r.status == 301 and r.headers["location"] == "http://a.example/new"
            assert f.fetch("http://a.example/missing").status == 404
            assert fetch_following(f, "http://a.example/old").url == "http://a.example/"

    def test_memento_headers_over_http(self):
        archive = serve_archive(small_site())
        with serve_http(archive) as proxy:
            from eventcrawl.memento import MementoClient

            f = RequestsFetcher(timeout=5, proxies={"http": proxy})
            client = MementoClient(f, archive.timegate, archive.timemap)
            m, resp = client.fetch_memento("http://a.example/", datetime(2011, 1, 8, tzinfo=UTC))
            assert m.memento_datetime == datetime(2011, 1, 10, tzinfo=UTC)
            assert resp.headers["Memento-Datetime"] == "Mon, 10 Jan 2011 00:00:00 GMT"
            assert any("Accept-Datetime" in h for _, h in archive.requests)

    def test_connection_error(self):
        f = RequestsFetcher(timeout=1, proxies={"http": "http://127.0.0.1:9"})
        with pytest.raises(FetchError):
            f.fetch("http://a.example/")

    def test_politeness_delay_applies(self):
        f = RequestsFetcher(delay=0.5)
        ft = FakeTime()
        f.limiter = HostRateLimiter(0.5, ft.clock, ft.sleep)
        f.limiter.wait("http://x/")
        f.limiter.wait("http://x/")
        assert ft.slept == [0.5]
