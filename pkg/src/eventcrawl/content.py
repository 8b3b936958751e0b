"""Content relevance: boilerplate removal, TF-IDF n-gram vectors, cosine.

Vectors hold 1-grams and 2-grams keyed by their space-joined lowercase
tokens.  IDF comes from a document-frequency table; the bundled table is
small and only meant for tests and demos.
"""

from __future__ import annotations

import logging
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from statistics import fmean
from typing import Iterable, Mapping, Sequence

from bs4 import BeautifulSoup, NavigableString, Tag
from bs4.element import Comment, Doctype, ProcessingInstruction

log = logging.getLogger(__name__)

_TOKEN = re.compile(r"[^\W_]+")

DROP_TAGS = frozenset(
    {"script", "style", "nav", "footer", "header", "aside", "noscript", "form",
     "iframe", "svg", "template", "head", "button", "select"}
)
BLOCK_TAGS = frozenset(
    {"html", "body", "p", "div", "li", "ul", "ol", "td", "th", "tr", "table", "tbody",
     "thead", "h1", "h2", "h3", "h4", "h5", "h6", "article", "section", "main",
     "blockquote", "pre", "dd", "dt", "dl", "figure", "figcaption", "caption", "br", "hr"}
)


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class IdfTable:
    doc_freq: Mapping[str, int] = field(default_factory=dict)
    corpus_size: int = 0

    def __post_init__(self):
        for term, df in self.doc_freq.items():
            if not 0 <= df <= self.corpus_size:
                raise ValueError(f"doc_freq[{term!r}]={df} outside [0, {self.corpus_size}]")

    def idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        return math.log((self.corpus_size + 1) / (df + 1)) + 1.0

    @classmethod
    def uniform(cls) -> "IdfTable":
        """Table under which every n-gram has IDF exactly 1."""
        return cls({}, 0)

    @classmethod
    def load(cls, path: str | Path) -> "IdfTable":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())

    @classmethod
    def parse(cls, text: str) -> "IdfTable":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#corpus_size"):
            raise ValueError("IDF table must start with '#corpus_size<TAB><N>'")
        corpus_size = int(lines[0].split("\t")[1])
        doc_freq = {}
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                ngram, df = line.rsplit("\t", 1)
                doc_freq[" ".join(tokenize(ngram))] = int(df)
            except ValueError:
                raise ValueError(f"bad IDF row at line {lineno}: {line!r}") from None
        return cls(doc_freq, corpus_size)

    @classmethod
    def bundled(cls) -> "IdfTable":
        ref = resources.files("eventcrawl") / "data" / "idf_en_small.tsv"
        return cls.parse(ref.read_text(encoding="utf-8"))


class TermVector(Mapping[str, float]):
    """Sparse non-negative n-gram weights; zero weights are never stored."""

    __slots__ = ("_w", "_norm")

    def __init__(self, weights: Mapping[str, float] | Iterable[tuple[str, float]] = ()):
        items = weights.items() if isinstance(weights, Mapping) else weights
        w = {}
        for k, v in items:
            if v < 0:
                raise ValueError(f"negative weight for {k!r}")
            if not 1 <= k.count(" ") + 1 <= 2:
                raise ValueError(f"n-gram {k!r} must have 1 or 2 tokens")
            if v > 0:
                w[k] = float(v)
        self._w = w
        self._norm = math.sqrt(math.fsum(v * v for v in w.values()))

    def __getitem__(self, key):
        return self._w[key]

    def __iter__(self):
        return iter(self._w)

    def __len__(self):
        return len(self._w)

    def __repr__(self):
        return f"TermVector({len(self._w)} terms)"

    def __eq__(self, other):
        if isinstance(other, TermVector):
            return self._w == other._w
        return NotImplemented

    @property
    def norm(self) -> float:
        return self._norm

    def scaled(self, c: float) -> "TermVector":
        return TermVector({k: v * c for k, v in self._w.items()})

    def to_json(self) -> list:
        return [[k, self._w[k]] for k in sorted(self._w)]

    @classmethod
    def from_json(cls, data) -> "TermVector":
        return cls((k, float(v)) for k, v in data)


def ngram_counts(texts: Iterable[str]) -> Counter:
    """1-gram and 2-gram counts; bigrams never span two texts."""
    counts: Counter = Counter()
    for text in texts:
        toks = tokenize(text)
        counts.update(toks)
        counts.update(f"{a} {b}" for a, b in zip(toks, toks[1:]))
    return counts


def build_term_vector(text: str | Sequence[str], idf: IdfTable) -> TermVector:
    texts = [text] if isinstance(text, str) else list(text)
    counts = ngram_counts(texts)
    return TermVector({t: c * idf.idf(t) for t, c in counts.items()})


def cosine(a: Mapping[str, float], b: Mapping[str, float]) -> float:
    if not a or not b:
        return 0.0
    if len(a) > len(b):
        a, b = b, a
    dot = math.fsum(v * b[k] for k, v in a.items() if k in b)
    na = a.norm if isinstance(a, TermVector) else math.sqrt(math.fsum(v * v for v in a.values()))
    nb = b.norm if isinstance(b, TermVector) else math.sqrt(math.fsum(v * v for v in b.values()))
    if na == 0 or nb == 0:
        return 0.0
    return min(1.0, max(0.0, dot / (na * nb)))


def sample_size(n: int, fraction: float) -> int:
    return math.floor(fraction * n + 1e-9)


def split_schedule(n: int, fraction: float, repeats: int, rng_seed) -> list[list[int]]:
    """Seeded reference samples, one sorted index list per repeat.

    The same ``(n, fraction, rng_seed)`` always yields the same schedule, so
    content and temporal thresholds see identical samples per repeat, and
    the event vector uses the first one.
    """
    if not 0 < fraction <= 1:
        raise ValueError("sample fraction must be in (0, 1]")
    rng = random.Random(rng_seed)
    k = sample_size(n, fraction)
    return [sorted(rng.sample(range(n), k)) for _ in range(repeats)]


def build_event_vector(wiki_text: str, reference_texts: Sequence[str], sample_fraction: float,
                       rng_seed, idf: IdfTable | None = None) -> tuple[TermVector, list[int]]:
    idf = idf or IdfTable.uniform()
    if not reference_texts:
        if not 0 < sample_fraction <= 1:
            raise ValueError("sample fraction must be in (0, 1]")
        return build_term_vector(wiki_text, idf), []
    sampled = split_schedule(len(reference_texts), sample_fraction, 1, rng_seed)[0]
    texts = [wiki_text] + [reference_texts[i] for i in sampled]
    return build_term_vector(texts, idf), sampled


def content_threshold(wiki_text: str, reference_texts: Sequence[str], repeats: int,
                      sample_fraction: float, idf: IdfTable, rng_seed,
                      candidate: str = "concatenated") -> float:
    """Mean cosine between the event vector and the held-out references.

    ``candidate="concatenated"`` compares against one vector built from
    all held-out references; ``"mean"`` averages per-reference cosines.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    n = len(reference_texts)
    if n < 2:
        raise ValueError("cannot split references: need at least 2")
    if candidate not in ("concatenated", "mean"):
        raise ValueError(f"unknown candidate mode {candidate!r}")
    scores = []
    for sample in split_schedule(n, sample_fraction, repeats, rng_seed):
        chosen = set(sample)
        rest = [reference_texts[i] for i in range(n) if i not in chosen]
        if not rest:
            raise ValueError("cannot split references: sample leaves nothing held out")
        event = build_term_vector([wiki_text] + [reference_texts[i] for i in sample], idf)
        if candidate == "concatenated":
            scores.append(cosine(event, build_term_vector(rest, idf)))
        else:
            scores.append(fmean(cosine(event, build_term_vector(t, idf)) for t in rest))
    return fmean(scores)


# -- boilerplate removal ---------------------------------------------------

def _ws(text: str) -> str:
    return " ".join(text.split())


@dataclass
class _Block:
    parts: list = field(default_factory=list)
    tags: int = 0
    link_chars: int = 0

    @property
    def text(self) -> str:
        return _ws(" ".join(self.parts))


def _segment(node: Tag, blocks: list, current: _Block, in_link: bool = False) -> _Block:
    for child in node.children:
        if isinstance(child, (Comment, Doctype, ProcessingInstruction)):
            continue
        if isinstance(child, NavigableString):
            s = str(child)
            current.parts.append(s)
            if in_link:
                current.link_chars += len(_ws(s))
            continue
        if not isinstance(child, Tag):
            continue
        name = child.name.lower() if child.name else ""
        if name in DROP_TAGS:
            continue
        if name in BLOCK_TAGS:
            blocks.append(current)
            inner = _Block()
            inner = _segment(child, blocks, inner, in_link)
            blocks.append(inner)
            current = _Block()
        else:
            current.tags += 1
            current = _segment(child, blocks, current, in_link or name == "a")
    return current


def extract_main_text(html: str, min_density: float = 10.0, max_link_density: float = 0.5) -> str:
    """Main text of an HTML page with navigation and chrome removed.

    The page is cut into text blocks at block-level elements.  A block is
    kept when ``len(text) / (1 + inline tag count)`` exceeds
    ``min_density`` and less than ``max_link_density`` of its text sits
    inside links.  If nothing survives, all visible text is returned.
    """
    if not html or not html.strip():
        return ""
    soup = BeautifulSoup(html, "lxml")
    blocks: list[_Block] = []
    blocks.append(_segment(soup, blocks, _Block()))
    kept, visible = [], []
    for b in blocks:
        text = b.text
        if not text:
            continue
        visible.append(text)
        density = len(text) / (1 + b.tags)
        if density > min_density and b.link_chars / len(text) < max_link_density:
            kept.append(text)
    return " ".join(kept or visible)
