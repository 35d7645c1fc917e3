"""Per-domain grid sweeps over (AHC threshold, PCA energy fraction).

The sweeps produce a :class:`LookupTable` mapping each acoustic domain to
its best development-set configuration, plus a global fallback tuned on the
pooled corpus.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from ._validation import DegenerateRecordingError, FormatError
from .ahc import labels_to_turns
from .metrics import DerBreakdown, compute_der
from .pipeline import cluster_scores, score_recording

logger = logging.getLogger(__name__)

GLOBAL_KEY = "__global__"
TABLE_FORMAT = "domdiar-lookup"
TABLE_VERSION = 1
BASELINE_PCA_FRACTION = 0.3
# DERs closer than this are a tie
DER_TIE_DECIMALS = 12


@dataclass(frozen=True)
class TuningEntry:
    threshold: float
    pca_fraction: float

    def __post_init__(self):
        if not np.isfinite(self.threshold):
            raise ValueError("threshold must be finite")
        if not 0.0 < self.pca_fraction <= 1.0:
            raise ValueError(f"pca_fraction must be in (0, 1], got {self.pca_fraction}")


@dataclass(frozen=True)
class LookupTable:
    global_fallback: TuningEntry
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        if GLOBAL_KEY in self.entries:
            raise ValueError(f"{GLOBAL_KEY!r} is reserved")


def _grid(start, stop, step):
    n = int(round((stop - start) / step))
    return tuple(round(start + i * step, 10) + 0.0 for i in range(n + 1))


@dataclass(frozen=True)
class SweepGrid:
    """Threshold and PCA-fraction values to try (each strictly increasing)."""

    thresholds: tuple = _grid(-1.5, 0.0, 0.1)
    pca_values: tuple = _grid(0.1, 0.9, 0.1)

    def __post_init__(self):
        for name in ("thresholds", "pca_values"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ValueError(f"{name} must be non-empty")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, vals)
        if not all(0.0 < p <= 1.0 for p in self.pca_values):
            raise ValueError("pca_values must lie in (0, 1]")

    @classmethod
    def from_ranges(cls, threshold_range=(-1.5, 0.0, 0.1), pca_range=(0.1, 0.9, 0.1)):
        return cls(_grid(*threshold_range), _grid(*pca_range))


class DevRecording(NamedTuple):
    embeddings: object          # EmbeddingSet, vectors already preprocessed
    reference: object           # Annotation
    regions: object             # Timeline
    domain: Optional[str] = None


class SweepRow(NamedTuple):
    domain: str
    stage: str
    threshold: float
    pca_fraction: float
    der: float


class _Evaluator:
    """Caches score matrices per (recording, pca_fraction) across thresholds."""

    def __init__(self, dev, plda, workers=1, adapt_pool=None, within_frac=0.75):
        if not dev:
            raise ValueError("empty development list")
        self.dev = list(dev)
        self.plda = plda
        self.workers = workers
        self.adapt_pool = adapt_pool
        self.within_frac = within_frac
        self._scores = {}

    def _score_one(self, i, pca_fraction):
        rec = self.dev[i]
        try:
            return score_recording(self.plda, rec.embeddings.vectors, pca_fraction,
                                   self.adapt_pool, self.within_frac)
        except DegenerateRecordingError:
            logger.warning("skipping degenerate recording %s", rec.embeddings.recording_id)
            return None

    def scores(self, pca_fraction):
        key = float(pca_fraction)
        if key not in self._scores:
            idx = range(len(self.dev))
            if self.workers > 1:
                with ThreadPoolExecutor(self.workers) as pool:
                    mats = list(pool.map(lambda i: self._score_one(i, key), idx))
            else:
                mats = [self._score_one(i, key) for i in idx]
            self._scores[key] = mats
        return self._scores[key]

    def evaluate(self, threshold, pca_fraction, subset=None):
        mats = self.scores(pca_fraction)
        total = DerBreakdown()
        idx = range(len(self.dev)) if subset is None else subset
        for i in idx:
            if mats[i] is None:
                continue
            rec = self.dev[i]
            labels = cluster_scores(mats[i], threshold)
            hyp = labels_to_turns(labels, rec.embeddings.segments,
                                  rec.embeddings.recording_id)
            total = total + compute_der(rec.reference, hyp, rec.regions)
        return total


def evaluate_config(dev, plda, threshold, pca_fraction, workers=1, adapt_pool=None,
                    within_frac=0.75):
    """Time-weighted corpus DER of one configuration over ``dev``.

    Parameters
    ----------
    dev : list of DevRecording
    plda : PldaModel

    Returns
    -------
    DerBreakdown
        Summed over recordings; degenerate recordings are skipped.
    """
    return _Evaluator(dev, plda, workers, adapt_pool, within_frac).evaluate(
        threshold, pca_fraction)


def _der_value(bd):
    return round(bd.der, DER_TIE_DECIMALS) if bd.total > 0 else float("inf")


def _pick(candidates):
    # candidates: (der, threshold, pca); ties -> larger threshold, smaller pca
    return min(candidates, key=lambda c: (c[0], -c[1], c[2]))


def _sweep(evaluator, grid, mode, label, subset=None):
    rows = []
    if mode == "joint":
        cands = []
        for t in grid.thresholds:
            for p in grid.pca_values:
                der = _der_value(evaluator.evaluate(t, p, subset))
                cands.append((der, t, p))
                rows.append(SweepRow(label, "joint", t, p, der))
        _, t_best, p_best = _pick(cands)
    elif mode == "sequential":
        cands = []
        for t in grid.thresholds:
            der = _der_value(evaluator.evaluate(t, BASELINE_PCA_FRACTION, subset))
            cands.append((der, t, BASELINE_PCA_FRACTION))
            rows.append(SweepRow(label, "threshold", t, BASELINE_PCA_FRACTION, der))
        _, t_best, _ = _pick(cands)
        cands = []
        for p in grid.pca_values:
            der = _der_value(evaluator.evaluate(t_best, p, subset))
            cands.append((der, t_best, p))
            rows.append(SweepRow(label, "pca", t_best, p, der))
        _, _, p_best = _pick(cands)
    else:
        raise ValueError(f"unknown sweep mode {mode!r}")
    return TuningEntry(t_best, p_best), rows


def sweep_domain(dev_domain, plda, grid=None, mode="sequential", workers=1,
                 adapt_pool=None, within_frac=0.75, label="domain"):
    """Best grid configuration for one domain's recordings.

    ``sequential`` sweeps thresholds at the baseline PCA fraction 0.3, then PCA
    fractions at the chosen threshold; ``joint`` searches the full product.
    DER ties go to the larger threshold, then the smaller PCA fraction.

    Returns
    -------
    entry : TuningEntry
    rows : list of SweepRow
        Every evaluated grid point, for auditing.
    """
    grid = grid or SweepGrid()
    ev = _Evaluator(dev_domain, plda, workers, adapt_pool, within_frac)
    return _sweep(ev, grid, mode, label)


def build_lookup_table(dev, plda, grid=None, mode="sequential", workers=1,
                       adapt_pool=None, within_frac=0.75):
    """Sweep each labelled domain and the pooled corpus.

    A domain whose swept entry does worse on its own recordings than the
    global fallback entry takes the fallback entry instead.

    Parameters
    ----------
    dev : list of DevRecording
        Every recording must carry its true ``domain``.

    Returns
    -------
    table : LookupTable
    domain_rows : list of SweepRow
    global_rows : list of SweepRow
    """
    grid = grid or SweepGrid()
    if not dev:
        raise ValueError("empty development corpus")
    if any(r.domain is None for r in dev):
        raise ValueError("every development recording needs a domain label")
    ev = _Evaluator(dev, plda, workers, adapt_pool, within_frac)
    fallback, global_rows = _sweep(ev, grid, mode, GLOBAL_KEY)
    entries, domain_rows = {}, []
    for dom in sorted({r.domain for r in dev}):
        subset = [i for i, r in enumerate(dev) if r.domain == dom]
        entry, rows = _sweep(ev, grid, mode, dom, subset)
        domain_rows.extend(rows)
        # a sequential sweep can miss the fallback point; never do worse than it
        own = _der_value(ev.evaluate(entry.threshold, entry.pca_fraction, subset))
        glob = _der_value(ev.evaluate(fallback.threshold, fallback.pca_fraction, subset))
        if glob < own:
            logger.info("%s: global entry beats the swept entry (%.4f < %.4f)", dom, glob, own)
            entry = fallback
        entries[dom] = entry
    return LookupTable(fallback, entries), domain_rows, global_rows


def lookup(table, domain):
    return table.entries.get(domain, table.global_fallback)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def serialize_table(table):
    doc = {
        "format": TABLE_FORMAT,
        "version": TABLE_VERSION,
        "domains": {k: {"threshold": e.threshold, "pca_fraction": e.pca_fraction}
                    for k, e in [*table.entries.items(), (GLOBAL_KEY, table.global_fallback)]},
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def parse_table(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"lookup table is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != TABLE_FORMAT:
        raise FormatError(f"not a {TABLE_FORMAT} document")
    if doc.get("version") != TABLE_VERSION:
        raise FormatError(f"unsupported lookup table version {doc.get('version')!r}")
    domains = doc.get("domains")
    if not isinstance(domains, dict) or GLOBAL_KEY not in domains:
        raise FormatError(f"lookup table lacks a {GLOBAL_KEY!r} entry")
    entries = {}
    for name, obj in domains.items():
        try:
            entry = TuningEntry(float(obj["threshold"]), float(obj["pca_fraction"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad entry for {name!r}: {exc}") from None
        entries[name] = entry
    fallback = entries.pop(GLOBAL_KEY)
    return LookupTable(fallback, entries)


def format_sweep_report(rows):
    out = ["domain\tstage\tthreshold\tpca_fraction\tder_pct\n"]
    for r in rows:
        out.append(f"{r.domain}\t{r.stage}\t{r.threshold:.4f}\t{r.pca_fraction:.4f}\t"
                   f"{100.0 * r.der:.4f}\n")
    return "".join(out)
