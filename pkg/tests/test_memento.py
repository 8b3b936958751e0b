from datetime import datetime, timedelta, timezone

import pytest

from eventcrawl.http import FetchError, Response
from eventcrawl.memento import (
    LinkHeaderError,
    Memento,
    MementoClient,
    MementoError,
    NoPostEventMemento,
    NotArchived,
    archive_id,
    format_link_header,
    original_from_urim,
    parse_link_header,
    parse_timemap,
    resolve_urir,
)
from eventcrawl.testkit import FixtureSite, Page, Snapshot, serve_archive

from conftest import FIXTURES

UTC = timezone.utc
PREF = datetime(2011, 1, 8, 17, 10, tzinfo=UTC)


def captured():
    return [line for line in (FIXTURES / "headers" / "link_headers.txt").read_text().splitlines() if line]


class TestLinkHeader:
    def test_single_memento(self):
        links = parse_link_header('<http://a/m1>; rel="memento"; datetime="Sat, 08 Jan 2011 19:00:00 GMT"')
        assert len(links) == 1
        assert links[0].target == "http://a/m1"
        assert set(links[0].rels) == {"memento"}
        assert links[0].datetime == datetime(2011, 1, 8, 19, tzinfo=UTC)

    def test_original_and_next(self):
        value = ('<http://a.example/x>; rel="original", '
                 '<http://arch.test/web/20110111000000/http://a.example/x>; rel="next memento"; '
                 'datetime="Tue, 11 Jan 2011 00:00:00 GMT"')
        links = parse_link_header(value)
        assert [set(link.rels) for link in links] == [{"original"}, {"next", "memento"}]
        assert links.first("next").datetime == datetime(2011, 1, 11, tzinfo=UTC)

    def test_empty(self):
        assert len(parse_link_header("")) == 0
        assert len(parse_link_header(" , ,")) == 0

    def test_captured_aggregator_response(self):
        links = parse_link_header(captured()[0])
        assert len(links) == 6
        assert links.first("original").target.endswith("arizona.shooting/index.html")
        assert links.first("next").datetime == datetime(2011, 1, 11, 9, 30, tzinfo=UTC)
        assert links.first("first").has_rel("memento")

    def test_unknown_params_and_token_values(self):
        links = parse_link_header(captured()[2])
        assert links[0].param("license") == "http://creativecommons.org/licenses/by/4.0/"
        links = parse_link_header(captured()[3])
        assert links[0].rels == ("timegate",)
        assert links[1].param("title") == 'A "quoted" title'

    @pytest.mark.parametrize(
        "value, offset",
        [
            ('http://a/; rel="x"', 0),
            ('<http://a/>; rel="x"; <junk>', 22),
            ('<http://a/> rel="x"', 12),
            ('<http://a/', 0),
            ('<http://a/>; rel="unterminated', 30),
        ],
    )
    def test_errors_report_span(self, value, offset):
        with pytest.raises(LinkHeaderError, match=f"offset {offset}"):
            parse_link_header(value)

    def test_missing_rel(self):
        with pytest.raises(LinkHeaderError, match="no rel"):
            parse_link_header("<http://a/>; type=text")

    def test_bad_datetime(self):
        with pytest.raises(LinkHeaderError):
            parse_link_header('<http://a/>; rel="memento"; datetime="yesterday"')

    @pytest.mark.parametrize("idx", range(4))
    def test_round_trip(self, idx):
        parsed = parse_link_header(captured()[idx])
        assert parse_link_header(format_link_header(parsed)) == parsed


class TestTimeMap:
    BODY = """<http://a.example/x>; rel="original",
<http://tm.test/x>; rel="self"; type="application/link-format",
<http://arch.test/web/20120101000000/http://a.example/x>; rel="memento"; datetime="Sun, 01 Jan 2012 00:00:00 GMT",
<http://arch.test/web/20100101000000/http://a.example/x>; rel="first memento"; datetime="Fri, 01 Jan 2010 00:00:00 GMT",
<http://other.test/web/20110101000000/http://a.example/x>; rel="memento"; datetime="Sat, 01 Jan 2011 00:00:00 GMT"
"""

    def test_sorted(self):
        ms = parse_timemap(self.BODY)
        assert [m.memento_datetime.year for m in ms] == [2010, 2011, 2012]
        assert {m.uri_r for m in ms} == {"http://a.example/x"}
        assert [m.archive_id for m in ms] == ["arch.test", "other.test", "arch.test"]

    def test_only_self_and_original(self):
        assert parse_timemap('<http://a/>; rel="original", <http://t/>; rel="self"') == []

    def test_malformed(self):
        with pytest.raises(LinkHeaderError):
            parse_timemap("<http://a/>; rel=original, garbage")


class TestResolveUriR:
    def test_link_original(self):
        r = Response("http://arch.test/id/abc", 200, {"Link": '<http://a.example/x>; rel="original"'})
        assert resolve_urir(r) == "http://a.example/x"

    def test_pattern_strip(self):
        r = Response("http://host.test/web/20110108120000/http://example.com/x", 200, {})
        assert resolve_urir(r) == "http://example.com/x"

    def test_opaque(self):
        with pytest.raises(MementoError, match="cannot resolve original"):
            resolve_urir(Response("http://archive.test/abc123", 200, {}))

    @pytest.mark.parametrize(
        "uri_m, expected",
        [
            ("http://web.archive.org/web/20110108120000im_/http://a.example/i.png", "http://a.example/i.png"),
            ("https://wayback.archive-it.org/1068/20110109000000/http://a.example/x", "http://a.example/x"),
            ("http://archive.test/20110109/www.a.example/x", "http://www.a.example/x"),
            ("http://pywb.test/coll/20110109000000/https:/a.example/x", "https://a.example/x"),
            ("http://a.example/2011/01/09/story", None),
        ],
    )
    def test_patterns(self, uri_m, expected):
        assert original_from_urim(uri_m) == expected


class TestArchiveId:
    def test_same_host_same_id(self):
        a = Memento.make("http://web.archive.org/web/1/http://a/", "http://a/", PREF)
        b = Memento.make("http://web.archive.org/web/2/http://b/", "http://b/", PREF)
        assert a.archive_id == b.archive_id == "archive.org"

    @pytest.mark.parametrize(
        "uri, expected",
        [
            ("http://webarchive.nationalarchives.gov.uk/x", "nationalarchives.gov.uk"),
            ("http://archive.today/x", "archive.today"),
            ("http://wayback.vefsafn.is/x", "vefsafn.is"),
            ("http://127.0.0.1:8080/x", "127.0.0.1"),
        ],
    )
    def test_registrable_domain(self, uri, expected):
        assert archive_id(uri) == expected

    def test_urim_differs_from_urir(self):
        with pytest.raises(ValueError):
            Memento("http://a/", "http://a/", PREF, "a")


def site_with(snapshots, hops=None):
    page = Page("<html><body><p>x</p></body></html>")
    return FixtureSite({"http://a.example/x": page},
                       {"http://a.example/x": snapshots} if snapshots else {},
                       timegate_hops=hops or {})


def days(n):
    return PREF + timedelta(days=n)


class TestClient:
    def test_next_hop(self):
        # a prior-selecting TimeGate answers with day -5; one next hop gives +3
        snaps = [Snapshot(days(-5), "arch.test"), Snapshot(days(3), "arch.test")]
        fx = serve_archive(site_with(snaps), policy="prior")
        m = fx.client().timegate_negotiate("http://a.example/x", PREF)
        assert m.memento_datetime == days(3)
        assert sum("/web/" in u for u, _ in fx.requests) == 2

    def test_next_hop_closest(self):
        snaps = [Snapshot(days(-2), "arch.test"), Snapshot(days(3), "arch.test")]
        fx = serve_archive(site_with(snaps))
        assert fx.client().timegate_negotiate("http://a.example/x", PREF).memento_datetime == days(3)
        assert sum("/web/" in u for u, _ in fx.requests) == 2

    def test_closest_needs_no_hop(self):
        snaps = [Snapshot(days(-5), "arch.test"), Snapshot(days(3), "arch.test")]
        fx = serve_archive(site_with(snaps))
        assert fx.client().timegate_negotiate("http://a.example/x", PREF).memento_datetime == days(3)
        assert sum("/web/" in u for u, _ in fx.requests) == 1

    def test_direct_hit(self):
        fx = serve_archive(site_with([Snapshot(days(1), "arch.test")]))
        m = fx.client().timegate_negotiate("http://a.example/x", PREF)
        assert m.memento_datetime == days(1)
        assert sum("/web/" in u for u, _ in fx.requests) == 1

    def test_accept_datetime_sent(self):
        fx = serve_archive(site_with([Snapshot(days(1), "arch.test")]))
        fx.client().timegate_negotiate("http://a.example/x", PREF)
        assert fx.requests[0][1]["Accept-Datetime"] == "Sat, 08 Jan 2011 17:10:00 GMT"

    def test_pre_event_only(self):
        fx = serve_archive(site_with([Snapshot(days(-5), "arch.test")]))
        with pytest.raises(NoPostEventMemento):
            fx.client().timegate_negotiate("http://a.example/x", PREF)

    def test_unarchived(self):
        fx = serve_archive(site_with([]))
        with pytest.raises(NotArchived):
            fx.client().timegate_negotiate("http://a.example/x", PREF)

    def test_redirect_chain(self):
        fx = serve_archive(site_with([Snapshot(days(2), "arch.test")], hops={"http://a.example/x": 3}))
        m = fx.client().timegate_negotiate("http://a.example/x", PREF)
        assert m.memento_datetime == days(2)
        assert sum("/hop/" in u for u, _ in fx.requests) == 3

    def test_redirect_limit(self):
        fx = serve_archive(site_with([Snapshot(days(2), "arch.test")], hops={"http://a.example/x": 12}))
        with pytest.raises(FetchError, match="redirects"):
            fx.client().timegate_negotiate("http://a.example/x", PREF)

    def test_multi_archive(self):
        fx = serve_archive(site_with([Snapshot(days(-1), "arch-a.test"), Snapshot(days(4), "arch-b.test")]))
        m = fx.client().timegate_negotiate("http://a.example/x", PREF)
        assert (m.archive_id, m.memento_datetime) == ("arch-b.test", days(4))

    def test_retry_on_503(self):
        site = site_with([Snapshot(days(1), "arch.test")])
        tg = "http://timegate.test/timegate/http://a.example/x"
        fx = serve_archive(site, failures={tg: 2})
        assert fx.client(retries=2).timegate_negotiate("http://a.example/x", PREF).memento_datetime == days(1)
        fx = serve_archive(site, failures={tg: 3})
        with pytest.raises(FetchError):
            fx.client(retries=2).timegate_negotiate("http://a.example/x", PREF)

    def test_transport_error_retried(self):
        class Flaky:
            def __init__(self):
                self.calls = 0

            def fetch(self, uri, headers=None):
                self.calls += 1
                raise FetchError("connection reset")

        f = Flaky()
        with pytest.raises(FetchError):
            MementoClient(f, "http://tg/", retries=3).timegate_negotiate("http://a/", PREF)
        assert f.calls == 4

    def test_timemap(self):
        fx = serve_archive(site_with([Snapshot(days(3), "b.test"), Snapshot(days(-5), "a.test")]))
        ms = fx.client().timemap("http://a.example/x")
        assert [m.memento_datetime for m in ms] == [days(-5), days(3)]
        with pytest.raises(NotArchived):
            serve_archive(site_with([])).client().timemap("http://a.example/x")

    def test_missing_memento_datetime(self):
        class NoHeader:
            def fetch(self, uri, headers=None):
                return Response(uri, 200, {"Content-Type": "text/html"}, b"")

        from eventcrawl.dates import ProtocolError

        with pytest.raises(ProtocolError):
            MementoClient(NoHeader(), "http://tg/").timegate_negotiate("http://a/", PREF)
