"""Speaker turns, timelines, and RTTM / UEM text formats.

Times are double-precision seconds. Two intervals whose ends are within
``MERGE_TOL`` seconds of each other are treated as abutting and merged.
"""

from collections import OrderedDict
from dataclasses import dataclass, field

from ._validation import FormatError

MERGE_TOL = 1e-9
NA = "<NA>"


@dataclass(frozen=True, order=True)
class Turn:
    """One speaker-attributed interval of a recording."""

    recording_id: str
    channel: int
    onset: float
    duration: float
    speaker: str

    def __post_init__(self):
        if not self.recording_id:
            raise ValueError("recording_id must be non-empty")
        if int(self.channel) != self.channel or self.channel < 1:
            raise ValueError(f"channel must be a positive integer, got {self.channel!r}")
        if not self.onset >= 0:
            raise ValueError(f"onset must be >= 0, got {self.onset!r}")
        if not self.duration > 0:
            raise ValueError(f"duration must be > 0, got {self.duration!r}")
        if not self.speaker:
            raise ValueError("speaker must be non-empty")

    @property
    def offset(self):
        return self.onset + self.duration


@dataclass(frozen=True)
class Timeline:
    """Sorted, pairwise-disjoint set of half-open ``(onset, offset)`` intervals.

    Use :meth:`from_intervals` to build one from arbitrary (possibly
    overlapping) intervals; the raw constructor validates but does not merge.
    """

    intervals: tuple = ()

    def __post_init__(self):
        ivs = tuple((float(a), float(b)) for a, b in self.intervals)
        prev_end = None
        for a, b in ivs:
            if not a < b:
                raise ValueError(f"empty or inverted interval ({a}, {b})")
            if prev_end is not None and a < prev_end:
                raise ValueError("intervals must be sorted and disjoint")
            prev_end = b
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def from_intervals(cls, intervals):
        return cls(_merge(intervals))

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)

    def __bool__(self):
        return bool(self.intervals)

    @property
    def extent(self):
        if not self.intervals:
            return None
        return self.intervals[0][0], self.intervals[-1][1]


@dataclass(frozen=True)
class Annotation:
    """All turns of one recording."""

    recording_id: str
    turns: tuple = field(default=())

    def __post_init__(self):
        turns = tuple(self.turns)
        for t in turns:
            if t.recording_id != self.recording_id:
                raise ValueError(
                    f"turn for {t.recording_id!r} in annotation of {self.recording_id!r}")
        object.__setattr__(self, "turns", turns)

    @property
    def speakers(self):
        return sorted({t.speaker for t in self.turns})

    def speaker_timeline(self, speaker):
        return Timeline.from_intervals(
            (t.onset, t.offset) for t in self.turns if t.speaker == speaker)

    def sorted(self):
        return Annotation(self.recording_id,
                          sorted(self.turns, key=lambda t: (t.onset, t.speaker)))


def _merge(intervals):
    ivs = sorted((float(a), float(b)) for a, b in intervals if b > a)
    out = []
    for a, b in ivs:
        if out and a <= out[-1][1] + MERGE_TOL:
            if b > out[-1][1]:
                out[-1][1] = b
        else:
            out.append([a, b])
    return tuple((a, b) for a, b in out)


# ---------------------------------------------------------------------------
# timeline algebra
# ---------------------------------------------------------------------------

def timeline_union(a, b):
    return Timeline(_merge(list(a) + list(b)))


def timeline_intersect(a, b):
    out = []
    i = j = 0
    A, B = a.intervals, b.intervals
    while i < len(A) and j < len(B):
        lo = max(A[i][0], B[j][0])
        hi = min(A[i][1], B[j][1])
        if lo < hi:
            out.append((lo, hi))
        if A[i][1] < B[j][1]:
            i += 1
        else:
            j += 1
    return Timeline(tuple(out))


def timeline_difference(a, b):
    """Points of ``a`` not in ``b``."""
    out = []
    for lo, hi in a:
        cur = lo
        for blo, bhi in b:
            if bhi <= cur:
                continue
            if blo >= hi:
                break
            if blo > cur:
                out.append((cur, blo))
            cur = bhi
            if cur >= hi:
                break
        if cur < hi:
            out.append((cur, hi))
    return Timeline(tuple(out))


def timeline_duration(a):
    return float(sum(hi - lo for lo, hi in a))


def timeline_crop(ann, regions):
    """Clip every turn of ``ann`` to ``regions``.

    Turns spanning a gap in ``regions`` are split; empty remnants are dropped.
    """
    turns = []
    for t in ann.turns:
        clipped = timeline_intersect(Timeline(((t.onset, t.offset),)), regions)
        if clipped.intervals == ((t.onset, t.offset),):
            turns.append(t)  # untouched, keeps the exact duration
            continue
        for lo, hi in clipped:
            turns.append(Turn(t.recording_id, t.channel, lo, hi - lo, t.speaker))
    return Annotation(ann.recording_id, turns)


# ---------------------------------------------------------------------------
# RTTM
# ---------------------------------------------------------------------------

def parse_rttm(text):
    """Parse RTTM ``SPEAKER`` lines into one :class:`Annotation` per recording.

    Annotations appear in order of first occurrence; turns keep input order.
    Fields 6, 7, 9 and 10 are ignored.

    Raises
    ------
    FormatError
        On a malformed line; the message names the line and field.
    """
    by_rec = OrderedDict()
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if fields[0] != "SPEAKER":
            raise FormatError(f"expected 'SPEAKER', got {fields[0]!r}", lineno, 1)
        if not 9 <= len(fields) <= 10:
            raise FormatError(f"expected 9 or 10 fields, got {len(fields)}", lineno)
        rec = fields[1]
        try:
            channel = int(fields[2])
        except ValueError:
            raise FormatError(f"bad channel {fields[2]!r}", lineno, 3) from None
        if channel < 1:
            raise FormatError(f"channel must be positive, got {channel}", lineno, 3)
        onset = _parse_seconds(fields[3], lineno, 4)
        duration = _parse_seconds(fields[4], lineno, 5)
        if onset < 0:
            raise FormatError(f"negative onset {fields[3]}", lineno, 4)
        if duration <= 0:
            raise FormatError(f"non-positive duration {fields[4]}", lineno, 5)
        turn = Turn(rec, channel, onset, duration, fields[7])
        by_rec.setdefault(rec, []).append(turn)
    return [Annotation(rec, turns) for rec, turns in by_rec.items()]


def _parse_seconds(token, lineno, fieldno):
    try:
        value = float(token)
    except ValueError:
        raise FormatError(f"not a number: {token!r}", lineno, fieldno) from None
    if value != value or value in (float("inf"), float("-inf")):
        raise FormatError(f"not finite: {token!r}", lineno, fieldno)
    return value


def format_rttm_line(turn):
    return (f"SPEAKER {turn.recording_id} {turn.channel} {turn.onset:.3f} "
            f"{turn.duration:.3f} {NA} {NA} {turn.speaker} {NA} {NA}")


def emit_rttm(annotations):
    """Render annotations as RTTM text, turns sorted by (recording, onset, speaker)."""
    turns = [t for ann in annotations for t in ann.turns]
    turns.sort(key=lambda t: (t.recording_id, t.onset, t.speaker))
    return "".join(format_rttm_line(t) + "\n" for t in turns)


# ---------------------------------------------------------------------------
# UEM
# ---------------------------------------------------------------------------

def parse_uem(text):
    """Parse UEM lines ``<recording_id> <channel> <onset> <offset>``.

    Returns a dict mapping recording id to the union of its listed intervals.
    """
    raw = OrderedDict()
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields or fields[0].startswith((";", "#")):
            continue
        if len(fields) != 4:
            raise FormatError(f"expected 4 fields, got {len(fields)}", lineno)
        onset = _parse_seconds(fields[2], lineno, 3)
        offset = _parse_seconds(fields[3], lineno, 4)
        if onset < 0:
            raise FormatError(f"negative onset {fields[2]}", lineno, 3)
        if offset <= onset:
            raise FormatError(f"offset {fields[3]} <= onset {fields[2]}", lineno, 4)
        raw.setdefault(fields[0], []).append((onset, offset))
    return {rec: Timeline.from_intervals(ivs) for rec, ivs in raw.items()}


def emit_uem(regions, channel=1):
    lines = []
    for rec in sorted(regions):
        for lo, hi in regions[rec]:
            lines.append(f"{rec} {channel} {lo:.3f} {hi:.3f}\n")
    return "".join(lines)
