import math
import random
import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from eventcrawl.content import (
    IdfTable,
    TermVector,
    build_event_vector,
    build_term_vector,
    content_threshold,
    cosine,
    extract_main_text,
    tokenize,
)

import oracles

UNIFORM = IdfTable.uniform()

weights = st.dictionaries(
    st.sampled_from(["a", "b", "c", "d", "e", "a b", "b c", "c d", "x y"]),
    st.floats(0.0, 100.0, allow_nan=False),
)


class TestTokenize:
    def test_lower_and_punctuation(self):
        assert tokenize("Giffords, shot! In Tucson_AZ.") == ["giffords", "shot", "in", "tucson", "az"]

    def test_unicode_words(self):
        assert tokenize("Café naïve 2011") == ["café", "naïve", "2011"]


class TestTermVector:
    def test_counts_with_uniform_idf(self):
        v = build_term_vector("a a b", UNIFORM)
        assert dict(v) == {"a": 2.0, "b": 1.0, "a a": 1.0, "a b": 1.0}

    def test_empty(self):
        assert len(build_term_vector("", UNIFORM)) == 0

    def test_idf_ordering(self):
        idf = IdfTable({"alpha": 10, "beta": 100, "gamma": 1000}, 10000)
        v = build_term_vector("alpha beta gamma", idf)
        assert v["alpha"] > v["beta"] > v["gamma"]
        # hand-computed smoothed IDF
        assert v["alpha"] == pytest.approx(math.log(10001 / 11) + 1)
        assert v["gamma"] == pytest.approx(math.log(10001 / 1001) + 1)
        # unseen bigram gets doc_freq 0
        assert v["alpha beta"] == pytest.approx(math.log(10001) + 1)

    def test_rejects_trigram_and_negative(self):
        with pytest.raises(ValueError):
            TermVector({"a b c": 1.0})
        with pytest.raises(ValueError):
            TermVector({"a": -1.0})

    def test_zero_weights_dropped(self):
        assert dict(TermVector({"a": 0.0, "b": 1.0})) == {"b": 1.0}

    def test_json_round_trip(self):
        v = build_term_vector("shooting in tucson", IdfTable.bundled())
        assert TermVector.from_json(v.to_json()) == v

    def test_bigrams_do_not_span_texts(self):
        v = build_term_vector(["a b", "c d"], UNIFORM)
        assert "b c" not in v


class TestIdfTable:
    def test_parse(self):
        t = IdfTable.parse("#corpus_size\t100\nthe\t90\nof the\t40\n")
        assert t.corpus_size == 100
        assert t.doc_freq == {"the": 90, "of the": 40}

    def test_bad_header(self):
        with pytest.raises(ValueError):
            IdfTable.parse("the\t90\n")

    def test_df_bound(self):
        with pytest.raises(ValueError):
            IdfTable({"x": 5}, 4)

    def test_bundled_downweights_stopwords(self):
        t = IdfTable.bundled()
        assert t.idf("the") < t.idf("giffords")


class TestCosine:
    def test_self(self):
        v = build_term_vector("congresswoman shot in tucson safeway", UNIFORM)
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint(self):
        assert cosine(TermVector({"x": 1}), TermVector({"y": 1})) == 0.0

    def test_hand_value(self):
        assert cosine(TermVector({"x": 1, "y": 1}), TermVector({"x": 1})) == pytest.approx(
            1 / math.sqrt(2), abs=1e-12
        )

    def test_empty(self):
        assert cosine(TermVector(), TermVector({"x": 1})) == 0.0

    def test_repetition_scales_unigrams(self):
        a = build_term_vector("x", UNIFORM)
        b = build_term_vector("x x", UNIFORM)
        # the repeated token also forms the bigram "x x"
        assert dict(b) == {"x": 2.0, "x x": 1.0}
        unigrams = TermVector({k: v for k, v in b.items() if " " not in k})
        assert cosine(a, unigrams) == pytest.approx(1.0, abs=1e-12)

    @given(weights, weights)
    def test_symmetric_and_bounded(self, a, b):
        va, vb = TermVector(a), TermVector(b)
        c = cosine(va, vb)
        assert 0.0 <= c <= 1.0
        assert c == pytest.approx(cosine(vb, va), abs=1e-12)

    @given(weights, weights, st.floats(0.01, 1000))
    def test_scale_invariant(self, a, b, k):
        va, vb = TermVector(a), TermVector(b)
        assert cosine(va.scaled(k), vb) == pytest.approx(cosine(va, vb), abs=1e-9)

    @given(weights, weights)
    def test_matches_dense_oracle(self, a, b):
        assert cosine(TermVector(a), TermVector(b)) == pytest.approx(
            oracles.cos({k: v for k, v in a.items() if v > 0}, {k: v for k, v in b.items() if v > 0}),
            abs=1e-9,
        )


class TestEventVector:
    refs = [f"reference {i} about the event" for i in range(10)]

    def test_full_fraction(self):
        _, sampled = build_event_vector("wiki", self.refs, 1.0, 7)
        assert sampled == list(range(10))

    def test_seeded_sample(self):
        v1, s1 = build_event_vector("wiki", self.refs, 0.6, 7)
        v2, s2 = build_event_vector("wiki", self.refs, 0.6, 7)
        assert len(s1) == 6
        assert s1 == s2 and v1 == v2

    def test_different_seeds_differ(self):
        samples = {tuple(build_event_vector("wiki", self.refs, 0.6, s)[1]) for s in range(5)}
        assert len(samples) > 1

    def test_no_references(self):
        v, sampled = build_event_vector("wiki text", [], 0.6, 1)
        assert sampled == []
        assert v == build_term_vector("wiki text", UNIFORM)

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            build_event_vector("w", self.refs, 0.0, 1)


class TestContentThreshold:
    def test_identical_references(self):
        text = "gunman opened fire at a constituent meeting outside a safeway"
        th = content_threshold(text, [text] * 6, 10, 0.6, UNIFORM, 3)
        assert th == pytest.approx(1.0, abs=1e-9)

    def test_disjoint_vocabulary(self):
        refs = [f"alpha{i} beta{i} gamma{i}" for i in range(6)]
        th = content_threshold("wiki only words here", refs, 10, 0.6, UNIFORM, 3)
        assert th == pytest.approx(0.0, abs=1e-12)

    def test_matches_oracle_on_five_documents(self):
        wiki = "shooting tucson congresswoman giffords safeway event"
        refs = [
            "giffords shot in tucson at safeway",
            "tucson shooting leaves six dead",
            "congresswoman giffords recovering after shooting",
            "weather in tucson is sunny",
            "safeway event turned into shooting scene",
        ]
        got = content_threshold(wiki, refs, 10, 0.6, UNIFORM, 11)
        assert got == pytest.approx(oracles.content_threshold(wiki, refs, 10, 0.6, 11), abs=1e-12)

    def test_mean_candidate_mode(self):
        wiki = "a b c"
        refs = ["a b", "b c", "c d", "d e"]
        got = content_threshold(wiki, refs, 4, 0.5, UNIFORM, 2, candidate="mean")
        expected = []
        for sample in oracles.samples(4, 0.5, 4, 2):
            ev = oracles.tfidf([wiki] + [refs[i] for i in sample])
            rest = [refs[i] for i in range(4) if i not in sample]
            expected.append(statistics.fmean(oracles.cos(ev, oracles.tfidf([r])) for r in rest))
        assert got == pytest.approx(statistics.fmean(expected), abs=1e-12)

    def test_too_few_references(self):
        with pytest.raises(ValueError, match="cannot split references"):
            content_threshold("w", ["only one"], 10, 0.6, UNIFORM, 1)

    def test_more_repeats_reduce_spread(self):
        rng = random.Random(0)
        vocab = [f"w{i}" for i in range(40)]
        refs = [" ".join(rng.choices(vocab, k=30)) for _ in range(12)]
        wiki = " ".join(vocab[:20])
        spread = {}
        for repeats in (10, 100):
            vals = [content_threshold(wiki, refs, repeats, 0.6, UNIFORM, s) for s in range(15)]
            spread[repeats] = statistics.pstdev(vals)
            assert all(0 <= v <= 1 for v in vals)
        assert spread[100] < spread[10]


class TestMainText:
    def test_plain_body(self):
        html = "<html><body>  The   quick brown fox\n jumps over the lazy dog.  </body></html>"
        assert extract_main_text(html) == "The quick brown fox jumps over the lazy dog."

    def test_short_body_falls_back_to_visible_text(self):
        assert extract_main_text("<body>Hi</body>") == "Hi"

    def test_empty(self):
        assert extract_main_text("") == ""

    def test_drops_scripts(self):
        html = "<body><script>var x = 1;</script><p>A long enough paragraph of text here.</p></body>"
        assert "var" not in extract_main_text(html)

    def test_nav_bar_removed(self):
        nav_words = [f"navlink{i}" for i in range(40)]
        article_words = [f"story{i % 97}" for i in range(500)]
        paragraphs = "".join(
            "<p>" + " ".join(article_words[i:i + 50]) + "</p>" for i in range(0, 500, 50)
        )
        nav = "<div class='menu'>" + "".join(f"<a href='/{w}'>{w}</a> " for w in nav_words) + "</div>"
        html = f"<html><body>{nav}<div class='content'>{paragraphs}</div>{nav}</body></html>"
        out = set(tokenize(extract_main_text(html)))
        assert out == set(article_words)
        assert not out & set(nav_words)
