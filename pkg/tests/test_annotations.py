import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from domdiar._validation import FormatError
from domdiar.annotations import (Annotation, Timeline, Turn, emit_rttm, emit_uem, parse_rttm,
                                 parse_uem, timeline_crop, timeline_difference,
                                 timeline_duration, timeline_intersect, timeline_union)


def tl(*ivs):
    return Timeline.from_intervals(ivs)


class TestRttm:
    def test_empty(self):
        assert parse_rttm("") == []

    def test_single_line(self):
        [ann] = parse_rttm("SPEAKER rec1 1 0.000 10.000 <NA> <NA> A <NA> <NA>")
        assert ann.recording_id == "rec1"
        assert ann.turns == (Turn("rec1", 1, 0.0, 10.0, "A"),)

    def test_nine_fields_accepted(self):
        [ann] = parse_rttm("SPEAKER rec1 1 0.5 2.0 <NA> <NA> B <NA>")
        assert ann.turns[0].speaker == "B"

    def test_negative_duration(self):
        with pytest.raises(FormatError, match="line 1.*field 5"):
            parse_rttm("SPEAKER rec1 1 5.0 -1.0 <NA> <NA> A <NA> <NA>")

    @pytest.mark.parametrize("line, field", [
        ("LEXEME rec1 1 0 1 <NA> <NA> A <NA> <NA>", "field 1"),
        ("SPEAKER rec1 x 0 1 <NA> <NA> A <NA> <NA>", "field 3"),
        ("SPEAKER rec1 1 zero 1 <NA> <NA> A <NA> <NA>", "field 4"),
        ("SPEAKER rec1 1 0 1 <NA> <NA> A <NA> <NA> extra", "11"),
        ("SPEAKER rec1 1 0 1 <NA> <NA>", "7"),
    ])
    def test_malformed(self, line, field):
        with pytest.raises(FormatError, match=field):
            parse_rttm("\n" + line)

    def test_line_number_reported(self):
        text = ("SPEAKER r 1 0 1 <NA> <NA> A <NA> <NA>\n"
                "SPEAKER r 1 0 nan <NA> <NA> A <NA> <NA>\n")
        with pytest.raises(FormatError, match="line 2"):
            parse_rttm(text)

    def test_emit_format(self):
        ann = Annotation("rec1", [Turn("rec1", 1, 0.0, 1.125, "A")])
        assert emit_rttm([ann]) == "SPEAKER rec1 1 0.000 1.125 <NA> <NA> A <NA> <NA>\n"

    def test_emit_sorts(self):
        ann = Annotation("r", [Turn("r", 1, 5.0, 1.0, "B"), Turn("r", 1, 0.0, 1.0, "A"),
                               Turn("r", 1, 5.0, 1.0, "A")])
        lines = emit_rttm([Annotation("s", [Turn("s", 1, 0.0, 1.0, "Z")]), ann]).splitlines()
        assert [ln.split()[1] + ln.split()[3] + ln.split()[7] for ln in lines] == \
            ["r0.000A", "r5.000A", "r5.000B", "s0.000Z"]

    def test_groups_by_recording_in_order(self):
        text = ("SPEAKER b 1 0 1 <NA> <NA> A <NA> <NA>\n"
                "SPEAKER a 1 0 1 <NA> <NA> A <NA> <NA>\n"
                "SPEAKER b 1 3 1 <NA> <NA> C <NA> <NA>\n")
        anns = parse_rttm(text)
        assert [a.recording_id for a in anns] == ["b", "a"]
        assert [t.speaker for t in anns[0].turns] == ["A", "C"]


ms = st.integers(min_value=0, max_value=100_000).map(lambda x: x / 1000)
dur = st.integers(min_value=1, max_value=50_000).map(lambda x: x / 1000)
speaker = st.sampled_from(["A", "B", "spk00", "x1"])


@st.composite
def annotations(draw):
    recs = draw(st.lists(st.sampled_from(["r1", "r2", "r3"]), min_size=1, max_size=3,
                         unique=True))
    out = []
    for rec in sorted(recs):
        turns = draw(st.lists(st.tuples(ms, dur, speaker), min_size=1, max_size=8))
        ann = Annotation(rec, [Turn(rec, 1, a, d, s) for a, d, s in turns])
        out.append(ann.sorted())
    return out


@settings(max_examples=200, deadline=None)
@given(annotations())
def test_rttm_round_trip(anns):
    assert parse_rttm(emit_rttm(anns)) == anns


class TestUem:
    def test_single(self):
        assert parse_uem("rec1 1 0.0 60.0") == {"rec1": tl((0, 60))}

    def test_union(self):
        assert parse_uem("rec1 1 0.0 10.0\nrec1 1 5.0 20.0") == {"rec1": tl((0, 20))}

    def test_empty_interval(self):
        with pytest.raises(FormatError):
            parse_uem("rec1 1 10.0 10.0")

    def test_round_trip(self):
        regions = {"a": tl((0, 1.5), (3, 4.25)), "b": tl((0.001, 2))}
        assert parse_uem(emit_uem(regions)) == regions


class TestTimeline:
    def test_intersect(self):
        assert timeline_intersect(tl((0, 10)), tl((5, 20))) == tl((5, 10))

    def test_duration(self):
        assert timeline_duration(tl((0, 3), (5, 6))) == 4.0

    def test_crop_splits(self):
        ann = Annotation("r", [Turn("r", 1, 0.0, 10.0, "A")])
        out = timeline_crop(ann, tl((2, 4), (8, 20)))
        assert [(t.onset, t.offset, t.speaker) for t in out.turns] == [(2, 4, "A"), (8, 10, "A")]

    def test_abutting_merge(self):
        assert tl((0, 1), (1 + 5e-10, 2)).intervals == ((0.0, 2.0),)

    def test_invalid(self):
        with pytest.raises(ValueError):
            Timeline(((0, 2), (1, 3)))
        with pytest.raises(ValueError):
            Timeline(((1, 1),))

    def test_difference(self):
        assert timeline_difference(tl((0, 10)), tl((2, 3), (5, 6), (9, 12))) == \
            tl((0, 2), (3, 5), (6, 9))


intervals = st.lists(st.tuples(st.integers(0, 200), st.integers(1, 40)),
                     max_size=8).map(lambda xs: Timeline.from_intervals((a, a + d) for a, d in xs))


@settings(max_examples=300, deadline=None)
@given(intervals, intervals)
def test_inclusion_exclusion(a, b):
    lhs = timeline_duration(timeline_union(a, b)) + timeline_duration(timeline_intersect(a, b))
    assert lhs == pytest.approx(timeline_duration(a) + timeline_duration(b), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(intervals, intervals)
def test_difference_partitions(a, b):
    diff = timeline_difference(a, b)
    inter = timeline_intersect(a, b)
    assert timeline_duration(diff) + timeline_duration(inter) == \
        pytest.approx(timeline_duration(a), abs=1e-9)
    assert timeline_duration(timeline_intersect(diff, b)) == 0


@settings(max_examples=200, deadline=None)
@given(annotations(), intervals)
def test_crop_never_grows(anns, regions):
    for ann in anns:
        before = sum(t.duration for t in ann.turns)
        after = sum(t.duration for t in timeline_crop(ann, regions).turns)
        assert after <= before + 1e-9
        assert timeline_crop(ann, tl((0, 1e9))) == ann
