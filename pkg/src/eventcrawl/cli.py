"""Command-line entry point: ``eventcrawl setup|crawl|report|compare``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .changepoint import RevisionHistory
from .crawler import Collection, Frontier, crawl
from .dates import StubLookup
from .event_setup import CrawlConfig, EventSetupError, EventSpec, build_event_spec
from .http import RequestsFetcher
from .memento import DEFAULT_TIMEGATE, DEFAULT_TIMEMAP, MementoClient
from .reporting import ReportError, compare_collections, write_report

log = logging.getLogger("eventcrawl")


def _fetchers(config: CrawlConfig, mode: str):
    """(fetcher, memento client, clock) for a fixture site or the real web."""
    fixture = config.path("fixture")
    if fixture is not None:
        from .testkit import FakeClock, FixtureSite, serve_archive, serve_live

        site = FixtureSite.load(fixture)
        clock = FakeClock()
        if mode == "live":
            return serve_live(site), None, clock
        archive = serve_archive(site)
        return archive, archive.client(), clock
    fetcher = RequestsFetcher(timeout=config.timeout, delay=config.politeness_delay)
    client = MementoClient(fetcher, config.timegate or DEFAULT_TIMEGATE,
                           config.timemap or DEFAULT_TIMEMAP)
    return fetcher, client, None


def _event_spec(config: CrawlConfig, fetcher) -> EventSpec:
    if config.event_spec:
        return EventSpec.load(config.path("event_spec"))
    wiki = config.path("wiki_html")
    if wiki is None:
        raise EventSetupError("config needs event_spec or wiki_html")
    history = RevisionHistory.from_jsonl(config.path("history"), config.page_title or "") \
        if config.history else None
    texts = None
    if config.reference_texts:
        texts = json.loads(config.path("reference_texts").read_text(encoding="utf-8"))
    return build_event_spec(wiki.read_text(encoding="utf-8"), history, config,
                            reference_texts=texts, fetcher=fetcher)


def cmd_setup(args) -> int:
    config = CrawlConfig.from_file(args.config)
    if args.seed_rng is not None:
        config = dataclasses.replace(config, rng_seed=args.seed_rng)
    fetcher = _fetchers(config, "live")[0]
    spec = _event_spec(config, fetcher)
    spec.save(args.out)
    print(f"event {spec.name}: {len(spec.seeds)} seeds, th_aggr {spec.th_aggr:.4f}")
    return 0


def cmd_crawl(args) -> int:
    config = CrawlConfig.from_file(args.config)
    overrides = {"mode": args.mode or config.mode}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.seed_rng is not None:
        overrides["rng_seed"] = args.seed_rng
    config = dataclasses.replace(config, **overrides)
    fetcher, client, clock = _fetchers(config, config.mode)
    spec = _event_spec(config, _fetchers(config, "live")[0])
    kwargs = {"clock": clock} if clock is not None else {}
    lookup = StubLookup.from_file(config.path("lookup")) if config.lookup else None
    coll = crawl(spec, config.mode, fetcher, client, lookup=lookup, workers=config.workers,
                 frontier=Frontier(cap=config.frontier_cap), idf=config.load_idf(), **kwargs)
    coll.save(args.out)
    print(f"{config.mode} crawl of {spec.name}: {len(coll.records)} records, "
          f"{len(coll.accepted)} accepted -> {args.out}")
    return 0


def cmd_report(args) -> int:
    coll = Collection.load(args.collection)
    write_report(coll, args.kind, args.out, axis=args.axis, subset=args.subset)
    print(f"wrote {args.out}")
    return 0


def cmd_compare(args) -> int:
    a, b = Collection.load(args.a), Collection.load(args.b)
    ra, rb, both = compare_collections(a, b)
    print(json.dumps({"relevant_a": ra, "relevant_b": rb, "overlap": both}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eventcrawl", description="Build event collections "
                                "from the live web or from web archives.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("setup", help="derive the event model and write event.json")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed-rng", type=int)
    s.set_defaults(func=cmd_setup)

    c = sub.add_parser("crawl", help="run a focused crawl")
    c.add_argument("--config", required=True)
    c.add_argument("--mode", choices=("live", "archive"))
    c.add_argument("--out", required=True)
    c.add_argument("--workers", type=int)
    c.add_argument("--seed-rng", type=int)
    c.set_defaults(func=cmd_crawl)

    r = sub.add_parser("report", help="write a CSV table from a collection")
    r.add_argument("--collection", required=True)
    r.add_argument("--kind", required=True, choices=("depth", "accum", "archives"))
    r.add_argument("--axis", default="documents", choices=("time", "documents"))
    r.add_argument("--subset", default="all", choices=("relevant", "all"))
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)

    m = sub.add_parser("compare", help="count relevant URIs shared by two collections")
    m.add_argument("a")
    m.add_argument("b")
    m.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (EventSetupError, ReportError, OSError, ValueError) as exc:
        print(f"eventcrawl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
