"""Diarization error rate and Jaccard error rate.

Scoring follows the region-based convention: the scored time axis is cut at
every turn boundary, and each homogeneous piece of duration ``d`` with
reference speakers ``R`` and hypothesis speakers ``H`` contributes

* missed      ``d * max(0, |R| - |H|)``
* false alarm ``d * max(0, |H| - |R|)``
* confusion   ``d * (min(|R|, |H|) - matched)``

where ``matched`` counts the mapped (reference, hypothesis) pairs both active
in the piece. The speaker mapping maximizes total mapped overlap time.
"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .annotations import Annotation, Timeline, timeline_crop, timeline_difference

logger = logging.getLogger(__name__)

BRUTE_FORCE_MAX_SPEAKERS = 7


@dataclass(frozen=True)
class DerBreakdown:
    missed: float = 0.0
    false_alarm: float = 0.0
    confusion: float = 0.0
    total: float = 0.0

    @property
    def errors(self):
        return self.missed + self.false_alarm + self.confusion

    @property
    def der(self):
        if not self.total > 0:
            raise ValueError("undefined DER: no scored reference speech")
        return self.errors / self.total

    def __add__(self, other):
        return DerBreakdown(self.missed + other.missed,
                            self.false_alarm + other.false_alarm,
                            self.confusion + other.confusion,
                            self.total + other.total)


@dataclass(frozen=True)
class SpeakerMapping:
    """Injective (reference speaker, hypothesis speaker) pairs, sorted."""

    pairs: tuple = ()

    def __post_init__(self):
        pairs = tuple(sorted(tuple(p) for p in self.pairs))
        refs = [r for r, _ in pairs]
        hyps = [h for _, h in pairs]
        if len(set(refs)) != len(refs) or len(set(hyps)) != len(hyps):
            raise ValueError("mapping is not injective")
        object.__setattr__(self, "pairs", pairs)

    def as_dict(self):
        return dict(self.pairs)


def _active(timeline, points):
    if not timeline.intervals:
        return np.zeros(len(points), dtype=bool)
    iv = np.asarray(timeline.intervals)
    idx = np.searchsorted(iv[:, 0], points, side="right") - 1
    ok = idx >= 0
    out = np.zeros(len(points), dtype=bool)
    out[ok] = points[ok] < iv[idx[ok], 1]
    return out


class _Regions:
    """Elementary pieces of the scored axis with per-speaker activity."""

    def __init__(self, ref, hyp, scored):
        self.ref_speakers = ref.speakers
        self.hyp_speakers = hyp.speakers
        ref_tl = [ref.speaker_timeline(s) for s in self.ref_speakers]
        hyp_tl = [hyp.speaker_timeline(s) for s in self.hyp_speakers]
        bounds = {x for tl in [scored, *ref_tl, *hyp_tl] for iv in tl for x in iv}
        bounds = np.array(sorted(bounds))
        if len(bounds) < 2:
            bounds = np.zeros(2)
        mids = (bounds[:-1] + bounds[1:]) / 2
        self.weights = np.diff(bounds) * _active(scored, mids)
        nseg = len(mids)
        self.R = np.array([_active(t, mids) for t in ref_tl], dtype=float).reshape(-1, nseg)
        self.H = np.array([_active(t, mids) for t in hyp_tl], dtype=float).reshape(-1, nseg)
        # overlap[r, h]: scored time where both are active
        self.overlap = (self.R * self.weights) @ self.H.T
        self.ref_time = self.R @ self.weights
        self.hyp_time = self.H @ self.weights

    def breakdown(self, mapping):
        nR = self.R.sum(axis=0)
        nH = self.H.sum(axis=0)
        matched = np.zeros_like(nR)
        ri = {s: i for i, s in enumerate(self.ref_speakers)}
        hi = {s: i for i, s in enumerate(self.hyp_speakers)}
        for r, h in mapping.pairs:
            matched += self.R[ri[r]] * self.H[hi[h]]
        w = self.weights
        return DerBreakdown(
            missed=float(w @ np.maximum(0.0, nR - nH)),
            false_alarm=float(w @ np.maximum(0.0, nH - nR)),
            confusion=float(w @ (np.minimum(nR, nH) - matched)),
            total=float(w @ nR))

    def optimal_mapping(self):
        if not self.ref_speakers or not self.hyp_speakers:
            return SpeakerMapping()
        rows, cols = linear_sum_assignment(self.overlap, maximize=True)
        return SpeakerMapping(
            (self.ref_speakers[r], self.hyp_speakers[c])
            for r, c in zip(rows, cols) if self.overlap[r, c] > 0)

    def brute_force_mapping(self):
        nr, nh = len(self.ref_speakers), len(self.hyp_speakers)
        if max(nr, nh) > BRUTE_FORCE_MAX_SPEAKERS:
            raise ValueError(
                f"brute-force mapping supports at most {BRUTE_FORCE_MAX_SPEAKERS} "
                f"speakers per side, got {nr} and {nh}")
        best_total, best_pairs = -1.0, None
        for k in range(min(nr, nh) + 1):
            for rs in itertools.combinations(range(nr), k):
                for hs in itertools.permutations(range(nh), k):
                    if any(self.overlap[r, h] <= 0 for r, h in zip(rs, hs)):
                        continue
                    total = float(sum(self.overlap[r, h] for r, h in zip(rs, hs)))
                    pairs = sorted((self.ref_speakers[r], self.hyp_speakers[h])
                                   for r, h in zip(rs, hs))
                    tol = 1e-12 * max(1.0, best_total)
                    if (total > best_total + tol
                            or (abs(total - best_total) <= tol and pairs < best_pairs)):
                        best_total, best_pairs = total, pairs
        return SpeakerMapping(best_pairs)


def _check_pair(ref, hyp):
    if hyp.recording_id != ref.recording_id:
        raise ValueError(
            f"reference {ref.recording_id!r} and hypothesis {hyp.recording_id!r} differ")


def scored_regions(ref, regions, collar=0.0, score_overlap=True):
    """The part of ``regions`` that counts towards scoring."""
    scored = regions
    if collar > 0:
        cut = Timeline.from_intervals(
            (max(0.0, b - collar), b + collar)
            for t in ref.turns for b in (t.onset, t.offset))
        scored = timeline_difference(scored, cut)
    if not score_overlap:
        cropped = timeline_crop(ref, scored)
        tls = [cropped.speaker_timeline(s) for s in cropped.speakers]
        bounds = np.array(sorted({x for tl in tls for iv in tl for x in iv}))
        if len(bounds) >= 2:
            mids = (bounds[:-1] + bounds[1:]) / 2
            count = sum(_active(tl, mids).astype(int) for tl in tls)
            multi = [(a, b) for a, b, c in zip(bounds[:-1], bounds[1:], count) if c > 1]
            scored = timeline_difference(scored, Timeline.from_intervals(multi))
    return scored


def _prepare(ref, hyp, regions, collar=0.0, score_overlap=True):
    _check_pair(ref, hyp)
    scored = scored_regions(ref, regions, collar, score_overlap)
    return _Regions(timeline_crop(ref, scored), timeline_crop(hyp, scored), scored)


def compute_der(ref, hyp, regions, collar=0.0, score_overlap=True):
    """DER components of ``hyp`` against ``ref`` inside ``regions``.

    Parameters
    ----------
    ref, hyp : Annotation
    regions : Timeline
        Scoring regions (UEM).
    collar : float, default=0.0
        Seconds excluded on each side of every reference boundary.
    score_overlap : bool, default=True
        Whether overlapped reference speech is scored.

    Returns
    -------
    DerBreakdown

    Raises
    ------
    ValueError
        If no reference speech is scored ("undefined DER").
    """
    reg = _prepare(ref, hyp, regions, collar, score_overlap)
    out = reg.breakdown(reg.optimal_mapping())
    if not out.total > 0:
        raise ValueError(f"undefined DER for {ref.recording_id!r}: no scored reference speech")
    return out


def der_with_mapping(ref, hyp, regions, mapping, collar=0.0, score_overlap=True):
    """DER components under a caller-supplied speaker mapping."""
    return _prepare(ref, hyp, regions, collar, score_overlap).breakdown(mapping)


def optimal_mapping(ref, hyp, regions, collar=0.0, score_overlap=True):
    return _prepare(ref, hyp, regions, collar, score_overlap).optimal_mapping()


def brute_force_mapping(ref, hyp, regions):
    """Exhaustive search over injective partial mappings (at most 7 speakers per side).

    Maximizes total mapped overlap; ties go to the lexicographically smallest
    sorted pair list. Pairs with no overlap are never mapped.
    """
    return _prepare(ref, hyp, regions).brute_force_mapping()


def speaker_jer(ref, hyp, regions):
    """Per reference speaker Jaccard error under the optimal overlap mapping."""
    reg = _prepare(ref, hyp, regions)
    if not reg.ref_speakers:
        raise ValueError(f"no reference speakers in {ref.recording_id!r}")
    mapped = reg.optimal_mapping().as_dict()
    hi = {s: i for i, s in enumerate(reg.hyp_speakers)}
    out = {}
    for i, r in enumerate(reg.ref_speakers):
        if r not in mapped:
            out[r] = 1.0
            continue
        j = hi[mapped[r]]
        inter = reg.overlap[i, j]
        union = reg.ref_time[i] + reg.hyp_time[j] - inter
        out[r] = float(1.0 - inter / union)
    return out


def compute_jer(ref, hyp, regions):
    """Mean over reference speakers of ``1 - |r & h| / |r | h|``; unmapped speakers count 1."""
    per = speaker_jer(ref, hyp, regions)
    return float(np.mean(list(per.values())))


# ---------------------------------------------------------------------------
# corpus scoring and report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RecordingScore:
    recording_id: str
    breakdown: DerBreakdown
    speaker_jers: tuple

    @property
    def jer(self):
        return float(np.mean(self.speaker_jers))


def score_corpus(refs, hyps, regions, collar=0.0, score_overlap=True, recordings=None):
    """Score every reference recording (or the ``recordings`` subset).

    Missing hypotheses count as all-missed. Recordings without UEM entry are
    scored over the reference extent.

    Returns
    -------
    per_recording : list of RecordingScore, sorted by recording id
    overall : RecordingScore
        Components summed over recordings; JER averaged over all reference
        speakers of the corpus.
    """
    ids = sorted(refs) if recordings is None else sorted(recordings)
    results = []
    for rec in ids:
        if rec not in refs:
            raise ValueError(f"no reference for recording {rec!r}")
        ref = refs[rec]
        hyp = hyps.get(rec)
        if hyp is None:
            logger.warning("no hypothesis for %s; counting all reference speech as missed",
                           rec)
            hyp = Annotation(rec)
        reg = regions.get(rec)
        if reg is None:
            logger.warning("no UEM entry for %s; scoring the reference extent", rec)
            reg = Timeline.from_intervals([(min(t.onset for t in ref.turns),
                                            max(t.offset for t in ref.turns))])
        bd = compute_der(ref, hyp, reg, collar, score_overlap)
        jers = speaker_jer(ref, hyp, reg)
        results.append(RecordingScore(rec, bd, tuple(jers[s] for s in sorted(jers))))
    if not results:
        raise ValueError("nothing to score")
    total = DerBreakdown()
    for r in results:
        total = total + r.breakdown
    all_jers = tuple(j for r in results for j in r.speaker_jers)
    return results, RecordingScore("OVERALL", total, all_jers)


def _report_line(score):
    bd = score.breakdown
    pct = lambda x: 100.0 * x / bd.total  # noqa: E731
    return (f"{score.recording_id} DER {100.0 * bd.der:.2f} MISS {pct(bd.missed):.2f} "
            f"FA {pct(bd.false_alarm):.2f} CONF {pct(bd.confusion):.2f} "
            f"JER {100.0 * score.jer:.2f}")


def format_report(per_recording, overall):
    return "".join(_report_line(s) + "\n" for s in [*per_recording, overall])
