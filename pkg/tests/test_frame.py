from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from belief.errors import CapacityError, FrameLookupError, ParseError, SchemaError, TotalConflictError, UsageError
from belief.frame import MassFunction, intersect, make_frame, normalize, singleton


class TestFrame:
    def test_order_and_lookup(self):
        frame = make_frame(["yes", "no", "maybe"])
        assert frame.labels == ("yes", "no", "maybe")
        assert frame.index("maybe") == 2
        assert frame.label(1) == "no"
        assert frame.full_mask == 0b111
        assert "no" in frame and "perhaps" not in frame

    def test_labels_are_trimmed(self):
        frame = make_frame([" A ", "B"])
        assert frame.labels == ("A", "B")
        assert frame.index(" A") == 0

    def test_duplicate_after_trim_rejected(self):
        with pytest.raises(SchemaError, match="duplicate"):
            make_frame(["A", "A "])

    def test_empty_rejected(self):
        with pytest.raises(SchemaError):
            make_frame([])

    @pytest.mark.parametrize("bad", ["", "  ", None, 3])
    def test_blank_or_non_string_label_rejected(self, bad):
        with pytest.raises(SchemaError):
            make_frame(["A", bad])

    def test_capacity(self):
        assert len(make_frame([f"h{i}" for i in range(64)])) == 64
        with pytest.raises(CapacityError):
            make_frame([f"h{i}" for i in range(65)])

    def test_unknown_label(self, abc):
        with pytest.raises(FrameLookupError, match="'Z' is not in frame"):
            abc.index("Z")
        with pytest.raises(FrameLookupError):
            abc.label(3)

    def test_lookup_error_is_a_key_error(self, abc):
        with pytest.raises(KeyError):
            abc.index("Z")


class TestHypothesisSet:
    def test_subset_and_intersection(self, abc):
        ab = abc.subset(["A", "B"])
        bc = abc.subset(["B", "C"])
        assert (ab & bc).labels() == ["B"]
        assert intersect(singleton(abc, "A"), singleton(abc, "C")).is_empty
        assert abc.theta().is_theta and len(abc.theta()) == 3
        assert singleton(abc, "B").issubset(ab)
        assert not ab.issubset(bc)

    def test_cross_frame_rejected(self, abc, ynm):
        with pytest.raises(UsageError):
            singleton(abc, "A") & singleton(ynm, "yes")

    def test_mask_must_fit(self, abc):
        from belief.frame import HypothesisSet

        with pytest.raises(UsageError):
            HypothesisSet(abc, 0b1000)

    @given(st.integers(0, 7), st.integers(0, 7))
    def test_intersection_is_bitwise_and(self, a, b):
        from belief.frame import HypothesisSet

        frame = make_frame(["A", "B", "C"])
        got = HypothesisSet(frame, a) & HypothesisSet(frame, b)
        assert set(got.labels()) == set(frame.labels_of(a)) & set(frame.labels_of(b))


class TestMassFunction:
    def test_vacuous(self, abc):
        m = MassFunction.vacuous(abc)
        assert m[abc.theta()] == 1.0
        assert len(m) == 1

    def test_missing_focal_reads_zero(self, abc):
        m = MassFunction(abc, {0b001: 0.4, 0b111: 0.6})
        assert m[singleton(abc, "B")] == 0.0
        assert m[0b001] == 0.4

    def test_rejects_empty_set_mass(self, abc):
        with pytest.raises(SchemaError):
            MassFunction(abc, {0: 0.1, 0b111: 0.9})

    def test_rejects_bad_sum(self, abc):
        with pytest.raises(SchemaError, match="sum"):
            MassFunction(abc, {0b001: 0.4, 0b111: 0.5})

    def test_sum_tolerance(self, abc):
        MassFunction(abc, {0b001: 0.4 + 5e-10, 0b111: 0.6})
        with pytest.raises(SchemaError):
            MassFunction(abc, {0b001: 0.4 + 5e-9, 0b111: 0.6})

    @pytest.mark.parametrize("mass", [0.0, -0.1, float("nan")])
    def test_rejects_non_positive(self, abc, mass):
        with pytest.raises(SchemaError):
            MassFunction(abc, {0b001: mass, 0b111: 1.0})

    def test_json_round_trip(self, abc):
        m = MassFunction(abc, {0b001: 0.25, 0b110: 0.25, 0b111: 0.5})
        data = json.loads(m.to_json())
        assert data["frame"] == ["A", "B", "C"]
        assert {"set": ["B", "C"], "mass": 0.25} in data["focal"]
        assert MassFunction.from_json(m.to_json()) == m

    def test_from_json_reports_location(self):
        with pytest.raises(ParseError, match="line 1"):
            MassFunction.from_json('{"frame": [')

    def test_from_dict_missing_field(self):
        with pytest.raises(SchemaError):
            MassFunction.from_dict({"frame": ["A"]})

    def test_max_deviation(self, abc):
        a = MassFunction(abc, {0b001: 0.5, 0b111: 0.5})
        b = MassFunction(abc, {0b010: 0.25, 0b111: 0.75})
        assert a.max_deviation(b) == pytest.approx(0.5)


class TestNormalize:
    def test_drops_empty_set_and_rescales(self, abc):
        m = normalize({abc.empty(): 0.5, singleton(abc, "A"): 0.25, abc.theta(): 0.25})
        assert m[singleton(abc, "A")] == pytest.approx(0.5)
        assert m[abc.theta()] == pytest.approx(0.5)

    def test_total_conflict(self, abc):
        with pytest.raises(TotalConflictError):
            normalize({0: 1.0}, abc)

    def test_bare_masks_need_frame(self):
        with pytest.raises(UsageError):
            normalize({1: 1.0})

    def test_tiny_masses_dropped(self, abc):
        m = normalize({0b001: 1e-14, 0b111: 1.0}, abc)
        assert 0b001 not in m.focal

    @given(st.dictionaries(st.integers(1, 7), st.floats(1e-6, 10.0), min_size=1))
    def test_result_is_normalized(self, raw):
        frame = make_frame(["A", "B", "C"])
        m = normalize(raw, frame)
        assert abs(sum(m.focal.values()) - 1.0) <= 1e-9
        assert 0 not in m.focal
