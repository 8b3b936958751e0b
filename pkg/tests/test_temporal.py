import random
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from eventcrawl.temporal import (
    NoGraceData,
    ReferenceEntry,
    TemporalParams,
    aggregate,
    aggregate_threshold,
    grace_period_archive,
    grace_period_live,
    temporal_score,
    temporal_threshold,
)

import oracles

DT_E = datetime(2011, 1, 8, 17, 10, tzinfo=timezone.utc)
DT_CP = datetime(2012, 1, 12, tzinfo=timezone.utc)
DELTA = (DT_CP - DT_E) / 4
PARAMS = TemporalParams(DT_E, DT_CP, grace=DELTA * 2)

offsets = st.integers(-10**8, 10**8).map(lambda s: timedelta(seconds=s))


def day(n):
    return DT_E + timedelta(days=n)


class TestTemporalScore:
    def test_interval_bounds(self):
        assert temporal_score(DT_E, PARAMS) == 1.0
        assert temporal_score(DT_CP, PARAMS) == 1.0
        assert temporal_score(DT_E - timedelta(seconds=1), PARAMS) == 0.0

    def test_half_life(self):
        assert temporal_score(DT_CP + DELTA, PARAMS) == pytest.approx(0.5, abs=1e-12)

    def test_half_delta(self):
        assert temporal_score(DT_CP + DELTA / 2, PARAMS) == pytest.approx(2 ** -0.5, abs=1e-12)

    def test_grace_cutoff(self):
        p = TemporalParams(DT_E, DT_CP, grace=timedelta(days=10))
        assert temporal_score(DT_CP + timedelta(days=10), p) > 0.5
        assert temporal_score(DT_CP + timedelta(days=10, seconds=1), p) == 0.0

    def test_cutoff_disabled_keeps_decay(self):
        p = TemporalParams(DT_E, DT_CP, grace=timedelta(0), cutoff=False)
        assert temporal_score(DT_CP + 3 * DELTA, p) == pytest.approx(0.125)

    def test_continuous_at_change_point(self):
        assert temporal_score(DT_CP + timedelta(microseconds=1), PARAMS) == pytest.approx(1.0)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            TemporalParams(DT_CP, DT_E, timedelta(0))
        with pytest.raises(ValueError):
            TemporalParams(DT_E, DT_CP, timedelta(days=-1))

    @given(offsets, offsets)
    def test_non_increasing_after_change_point(self, a, b):
        t1, t2 = sorted([DT_CP + abs(a), DT_CP + abs(b)])
        assert temporal_score(t1, PARAMS) >= temporal_score(t2, PARAMS)

    @given(offsets)
    def test_matches_oracle(self, off):
        t = DT_E + off
        assert temporal_score(t, PARAMS) == pytest.approx(
            oracles.rtemp(t, DT_E, DT_CP, PARAMS.grace), abs=1e-12
        )

    @given(st.integers(1, 10**6))
    def test_half_to_one_within_delta(self, micro_frac):
        lag = DELTA * (micro_frac / 10**6)
        s = temporal_score(DT_CP + lag, PARAMS)
        assert 0.5 - 1e-12 <= s < 1.0


class TestGrace:
    def test_archive_mean(self):
        refs = [ReferenceEntry(f"http://x/{d}", day(0), day(d)) for d in (10, 20, 30)]
        assert grace_period_archive(refs) == timedelta(days=20)

    def test_archive_single(self):
        assert grace_period_archive([ReferenceEntry("http://x", day(1), day(8))]) == timedelta(days=7)

    def test_archive_clamps_negative(self):
        refs = [
            ReferenceEntry("http://a", day(0), day(5)),
            ReferenceEntry("http://b", day(10), day(8)),
            ReferenceEntry("http://c", day(0), day(10)),
            ReferenceEntry("http://d", day(0), None),
        ]
        assert grace_period_archive(refs) == timedelta(days=5)

    def test_archive_no_data(self):
        with pytest.raises(NoGraceData):
            grace_period_archive([ReferenceEntry("http://a", day(0))])

    def test_live_pairs(self):
        assert grace_period_live([ReferenceEntry("a", day(0)), ReferenceEntry("b", day(2))]) == timedelta(days=2)
        refs = [ReferenceEntry(str(d), day(d)) for d in (0, 1, 2)]
        assert grace_period_live(refs) == timedelta(days=4 / 3)

    def test_live_identical(self):
        refs = [ReferenceEntry(str(i), day(3)) for i in range(4)]
        assert grace_period_live(refs) == timedelta(0)

    def test_live_too_few(self):
        with pytest.raises(NoGraceData):
            grace_period_live([ReferenceEntry("a", day(0)), ReferenceEntry("b")])


class TestTemporalThreshold:
    def test_all_inside(self):
        refs = [ReferenceEntry(str(i), day(i)) for i in range(10)]
        assert temporal_threshold(refs, 10, 0.6, PARAMS, 1) == 1.0

    def test_all_before(self):
        refs = [ReferenceEntry(str(i), day(-i - 1)) for i in range(10)]
        assert temporal_threshold(refs, 10, 0.6, PARAMS, 1) == 0.0

    def test_mixed_matches_oracle(self):
        rng = random.Random(5)
        dates = [DT_E + timedelta(days=rng.uniform(-60, 500)) for _ in range(10)]
        dates[3] = None
        refs = [ReferenceEntry(f"http://r/{i}", d) for i, d in enumerate(dates)]
        got = temporal_threshold(refs, 10, 0.6, PARAMS, 9)
        expected = oracles.temporal_threshold(dates, 10, 0.6, 9, DT_E, DT_CP, PARAMS.grace)
        assert got == pytest.approx(expected, abs=1e-12)
        assert 0 < got < 1

    def test_no_dated_refs(self):
        with pytest.raises(ValueError):
            temporal_threshold([ReferenceEntry("a"), ReferenceEntry("b")], 3, 0.6, PARAMS, 1)


class TestAggregate:
    @pytest.mark.parametrize(
        "args, expected",
        [((1.0, 1.0, 0.5, 0.5), 1.0), ((0.8, 1.0, 0.5, 0.5), 0.9), ((0.3, 0.9, 1.0, 0.0), 0.3)],
    )
    def test_values(self, args, expected):
        assert aggregate(*args) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize(
        "args, expected",
        [((0.7, 0.8, 0.5, 0.5), 0.75), ((0, 0, 0.3, 0.7), 0.0), ((1, 1, 0.5, 0.5), 1.0)],
    )
    def test_threshold(self, args, expected):
        assert aggregate_threshold(*args) == pytest.approx(expected, abs=1e-12)

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            aggregate(1, 1, -0.1, 1.1)

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    def test_swap_symmetry_with_equal_weights(self, rc, rt, tc, tt):
        a = aggregate(rc, rt, 0.5, 0.5) >= aggregate_threshold(tc, tt, 0.5, 0.5)
        b = aggregate(rt, rc, 0.5, 0.5) >= aggregate_threshold(tt, tc, 0.5, 0.5)
        assert a == b

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 0.5))
    def test_monotone(self, rc, rt, bump):
        base = aggregate(rc, rt, 0.5, 0.5)
        assert aggregate(rc + bump, rt, 0.5, 0.5) >= base
        assert aggregate(rc, rt + bump, 0.5, 0.5) >= base
