import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetevt.exceptions import DataError
from hetevt.ingest import (
    Record,
    RecordTable,
    SpeedSample,
    cap_per_athlete,
    group,
    load_sample_csv,
    load_sample_json,
    parse_csv,
    prepare_for_lambda,
    save_sample_csv,
    save_sample_json,
    smooth_ties,
    to_speed,
    to_time,
)


def write(tmp_path, text, name="t.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def table(*rows):
    return RecordTable(Record(*r) for r in rows)


class TestParseCsv:
    def test_three_rows(self, tmp_path):
        path = write(tmp_path, "athlete_id,time_s,wind,year\na,10.1,0.5,2001\nb,10.2,,\na,10.3,-1.0,2003\n")
        t = parse_csv(path)
        assert len(t) == 3
        assert [r.athlete_id for r in t.rows] == ["a", "b", "a"]
        assert t.rows[1].wind is None and t.rows[0].year == 2001

    def test_bad_time_names_row(self, tmp_path):
        lines = ["athlete_id,time_s"] + [f"a{i},10.{i}" for i in range(5)] + ["x,abc"]
        path = write(tmp_path, "\n".join(lines) + "\n")
        with pytest.raises(DataError, match="7") as exc:
            parse_csv(path)
        assert exc.value.rows == [7]

    def test_header_only(self, tmp_path):
        assert len(parse_csv(write(tmp_path, "athlete_id,time_s\n"))) == 0

    def test_missing_column(self, tmp_path):
        with pytest.raises(DataError, match="time_s"):
            parse_csv(write(tmp_path, "athlete_id,seconds\na,10\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            parse_csv(tmp_path / "nope.csv")

    def test_non_positive_time_rejected(self, tmp_path):
        with pytest.raises(DataError, match="3"):
            parse_csv(write(tmp_path, "athlete_id,time_s\na,10\nb,-1\n"))


class TestCap:
    def test_seven_records_keeps_five_fastest(self):
        t = table(*[("a", x) for x in (10.5, 10.1, 10.7, 10.2, 10.3, 10.6, 10.4)])
        kept = sorted(r.time_s for r in cap_per_athlete(t, 5).rows)
        assert kept == [10.1, 10.2, 10.3, 10.4, 10.5]

    def test_below_cap(self):
        t = table(("a", 10.0), ("a", 10.1), ("a", 10.2))
        assert cap_per_athlete(t, 5).rows == t.rows

    def test_six_plus_two(self):
        t = table(*[("a", 10 + i / 10) for i in range(6)], ("b", 11.0), ("b", 11.1))
        out = cap_per_athlete(t, 5)
        counts = {aid: sum(r.athlete_id == aid for r in out.rows) for aid in "ab"}
        assert counts == {"a": 5, "b": 2}
        assert max(r.time_s for r in out.rows if r.athlete_id == "a") == pytest.approx(10.4)

    def test_ties_at_cut_keep_input_order(self):
        t = table(("a", 10.0, 1.0), ("a", 10.0, 2.0), ("a", 10.0, 3.0))
        assert [r.wind for r in cap_per_athlete(t, 2).rows] == [1.0, 2.0]

    @given(st.lists(st.tuples(st.sampled_from("abcd"), st.integers(950, 1200)), max_size=40), st.integers(1, 6))
    def test_never_grows_never_drops_athlete(self, rows, cap):
        t = table(*[(a, c / 100) for a, c in rows])
        out = cap_per_athlete(t, cap)
        for aid in {a for a, _ in rows}:
            before = sum(r.athlete_id == aid for r in t.rows)
            after = sum(r.athlete_id == aid for r in out.rows)
            assert 1 <= after <= min(before, cap)


class TestSmoothTies:
    def test_single_row_midpoint(self):
        out = smooth_ties(table(("a", 11.05)))
        assert out.rows[0].time_s == pytest.approx(11.05, abs=1e-12)

    def test_two_rows_by_wind(self):
        out = smooth_ties(table(("a", 11.05, 1.1), ("b", 11.05, 0.3)))
        assert out.rows[0].time_s == pytest.approx(11.0525, abs=1e-12)
        assert out.rows[1].time_s == pytest.approx(11.0475, abs=1e-12)

    def test_missing_wind_last(self):
        out = smooth_ties(table(("a", 10.0, None), ("b", 10.0, 2.0), ("c", 10.0, None)))
        t = [r.time_s for r in out.rows]
        assert t[1] < t[0] < t[2]

    def test_distinct_times_unchanged(self):
        t = table(("a", 10.01), ("b", 10.02), ("c", 9.99))
        np.testing.assert_allclose(smooth_ties(t).times, t.times, atol=1e-12)

    def test_off_grid_time_rejected(self):
        with pytest.raises(DataError):
            smooth_ties(table(("a", 10.013)))

    @given(st.lists(st.tuples(st.integers(990, 1010), st.one_of(st.none(), st.floats(-2, 2))), min_size=1, max_size=60))
    def test_properties(self, rows):
        t = table(*[(f"x{i}", c / 100, w) for i, (c, w) in enumerate(rows)])
        out = smooth_ties(t)
        new, old = out.times, t.times
        assert len(out) == len(t)
        assert len(np.unique(new)) == len(new)
        assert np.all(np.abs(new - old) < 0.005)
        assert sorted(np.round(new / 0.01).astype(int).tolist()) == sorted(np.round(old / 0.01).astype(int).tolist())


class TestSpeed:
    def test_ten_seconds(self):
        assert to_speed(10.0) == pytest.approx(36.0)

    def test_wr_pairing(self):
        assert to_speed(9.54) == pytest.approx(37.7358, abs=1e-4)
        assert round(to_time(37.72), 2) == 9.54

    def test_round_trip(self):
        assert to_time(to_speed(10.49)) == pytest.approx(10.49, rel=1e-12)

    def test_bad_time(self):
        with pytest.raises(ValueError):
            to_speed(0.0)

    @given(st.floats(5, 30), st.floats(5, 30))
    def test_strictly_decreasing(self, a, b):
        if a < b:
            assert to_speed(a) > to_speed(b)
        assert to_time(to_speed(a)) == pytest.approx(a, rel=1e-12)


class TestGroup:
    def test_two_by_two(self):
        s = group(table(("a", 10.0), ("b", 11.0), ("a", 10.5), ("b", 11.5)))
        assert (s.n, s.p) == (4, 2)
        assert s.group_offsets.tolist() == [0, 2]
        np.testing.assert_allclose(s.values, to_speed(np.array([10.0, 10.5, 11.0, 11.5])))

    def test_empty(self):
        s = group(RecordTable())
        assert (s.n, s.p) == (0, 0)

    def test_sorted_ids(self):
        s = group(table(("c", 10.0), ("a", 10.1), ("b", 10.2), ("a", 10.3)))
        assert s.athlete_ids == ("a", "b", "c")
        assert s.group_sizes.tolist() == [2, 1, 1]
        np.testing.assert_allclose(s.values[:2], to_speed(np.array([10.1, 10.3])))


def sample_with_sizes(sizes):
    n = sum(sizes)
    offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    return SpeedSample(np.arange(1.0, n + 1), offsets, np.array(sizes))


class TestPrepareForLambda:
    def test_drop(self):
        s = prepare_for_lambda(sample_with_sizes([1, 2, 5]), "drop")
        assert (s.p, s.n, s.group_sizes.tolist()) == (2, 7, [2, 5])

    def test_duplicate(self):
        s = prepare_for_lambda(sample_with_sizes([1, 2, 5]), "duplicate")
        assert (s.p, s.n, s.group_sizes.tolist()) == (3, 9, [2, 2, 5])
        assert s.values[0] == s.values[1] == 1.0

    @pytest.mark.parametrize("policy", ["drop", "duplicate"])
    def test_noop(self, policy):
        base = sample_with_sizes([2, 3])
        assert prepare_for_lambda(base, policy) is base

    def test_unknown_policy(self):
        with pytest.raises(ValueError):
            prepare_for_lambda(sample_with_sizes([1, 2]), "keep")


class TestSerialization:
    def test_json_round_trip(self, tmp_path):
        s = sample_with_sizes([2, 3])
        save_sample_json(s, tmp_path / "s.json")
        back = load_sample_json(tmp_path / "s.json")
        np.testing.assert_array_equal(back.values, s.values)
        assert back.group_sizes.tolist() == [2, 3]
        doc = json.loads((tmp_path / "s.json").read_text())
        assert {"values", "group_offsets", "group_sizes"} <= set(doc)

    def test_csv_pair_round_trip(self, tmp_path):
        s = SpeedSample([36.1, 35.2, 34.3], [0, 1], [1, 2], ("x", "y"))
        save_sample_csv(s, tmp_path / "v.csv", tmp_path / "g.csv")
        back = load_sample_csv(tmp_path / "v.csv", tmp_path / "g.csv")
        np.testing.assert_array_equal(back.values, s.values)
        assert back.athlete_ids == ("x", "y")

    def test_partition_enforced(self):
        with pytest.raises(DataError):
            SpeedSample([1.0, 2.0, 3.0], [0, 1], [1, 1])


@settings(max_examples=30)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=10))
def test_sample_partition_invariant(sizes):
    s = sample_with_sizes(sizes)
    assert s.n == sum(sizes)
    ends = s.group_offsets + s.group_sizes
    assert ends[-1] == s.n and np.all(s.group_offsets[1:] == ends[:-1])
    prepped = prepare_for_lambda(s, "drop")
    assert prepped.p == 0 or prepped.group_sizes.min() >= 2
