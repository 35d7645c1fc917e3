"""Deterministic synthetic multi-domain diarization corpus.

Each domain owns a random unit direction scaled by ``direction_scale``.
Speaker means scatter around it with unit variance and subsegment vectors
scatter around their speaker mean with ``within_std``. Every draw comes from
a Philox (counter-based) generator keyed by ``(seed, stream, domain,
recording, speaker, subsegment)``, so files are byte-identical across runs,
platforms and worker counts.

Output layout::

    <out>/emb/<rec>.emb            subsegment embedding tables
    <out>/rttm/<rec>.rttm          reference turns
    <out>/uem/<rec>.uem            scoring regions
    <out>/labels/domains.tsv       recording -> domain
    <out>/labels/recordings.emb    pooled recording embeddings
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adi import emit_domain_labels, emit_recording_embeddings, pool_recording_embedding
from .annotations import Annotation, Timeline, Turn, emit_rttm, emit_uem
from .dataio import write_text
from .embedkit import EmbeddingSet, emit_embedding_table

_DIRECTION, _SPEAKER, _SUBSEGMENT = 0, 1, 2

DIHARD_DOMAINS = ("audiobooks", "broadcast_interview", "clinical", "court", "cts",
                  "maptask", "meeting", "restaurant", "socio_field", "socio_lab",
                  "webvideo")


@dataclass(frozen=True)
class DomainSpec:
    name: str
    direction_scale: float = 20.0
    within_std: float = 0.1
    speakers_per_recording: int = 3
    recordings: int = 10
    subsegments_per_speaker: int = 10

    def __post_init__(self):
        if not self.name or "/" in self.name or any(c.isspace() for c in self.name):
            raise ValueError(f"bad domain name {self.name!r}")
        if not self.direction_scale > 0 or not self.within_std > 0:
            raise ValueError("direction_scale and within_std must be > 0")
        for attr in ("speakers_per_recording", "recordings", "subsegments_per_speaker"):
            if int(getattr(self, attr)) < 1:
                raise ValueError(f"{attr} must be >= 1")


@dataclass(frozen=True)
class SynthConfig:
    """Corpus generation settings.

    ``first_recording`` offsets recording indices, so a second split drawn
    with the same seed shares domain directions but not recordings.
    ``overlap`` extends every reference turn by that many seconds.
    """

    seed: int = 0
    dim: int = 16
    domains: tuple = field(default_factory=lambda: tuple(DomainSpec(n) for n in DIHARD_DOMAINS))
    subsegment_duration: float = 1.5
    first_recording: int = 0
    overlap: float = 0.0

    def __post_init__(self):
        doms = tuple(d if isinstance(d, DomainSpec) else DomainSpec(**d) for d in self.domains)
        if not doms:
            raise ValueError("need at least one domain")
        if len({d.name for d in doms}) != len(doms):
            raise ValueError("domain names must be distinct")
        if int(self.dim) < 1 or not self.subsegment_duration > 0 or self.overlap < 0:
            raise ValueError("invalid dim, subsegment_duration or overlap")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "domains", doms)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["domains"] = tuple(DomainSpec(**x) for x in d.get("domains", ()))
        if not d["domains"]:
            del d["domains"]
        return cls(**d)


def _rng(*key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def domain_center(config, d):
    spec = config.domains[d]
    u = _rng(config.seed, _DIRECTION, d).standard_normal(config.dim)
    return spec.direction_scale * u / np.linalg.norm(u)


@dataclass(frozen=True, eq=False)
class SynthRecording:
    domain: str
    embeddings: EmbeddingSet
    reference: Annotation
    regions: Timeline
    speakers: tuple  # speaker of each embedding row

    @property
    def recording_id(self):
        return self.embeddings.recording_id


def make_recording(config, d, r):
    """Generate recording ``r`` (absolute index) of domain ``d``."""
    spec = config.domains[d]
    rec_id = f"{spec.name}_{r:03d}"
    center = domain_center(config, d)
    S, K = spec.speakers_per_recording, spec.subsegments_per_speaker
    means = [center + _rng(config.seed, _SPEAKER, d, r, s).standard_normal(config.dim)
             for s in range(S)]
    dur = config.subsegment_duration
    times, vectors, speakers = [], [], []
    for k in range(K):
        for s in range(S):
            p = k * S + s
            noise = _rng(config.seed, _SUBSEGMENT, d, r, s, k).standard_normal(config.dim)
            times.append((round(p * dur, 3), round((p + 1) * dur, 3)))
            vectors.append(means[s] + spec.within_std * noise)
            speakers.append(f"S{s}")
    end = times[-1][1]
    turns = []
    for (a, b), spk in zip(times, speakers):
        b = min(end, round(b + config.overlap, 3))
        if turns and turns[-1][2] == spk and a <= turns[-1][1]:
            turns[-1][1] = max(turns[-1][1], b)
        else:
            turns.append([a, b, spk])
    ref = Annotation(rec_id, [Turn(rec_id, 1, a, round(b - a, 3), spk) for a, b, spk in turns])
    es = EmbeddingSet(rec_id, np.array(times), np.array(vectors))
    return SynthRecording(spec.name, es, ref, Timeline(((0.0, end),)), tuple(speakers))


def make_corpus(config, workers=1):
    jobs = [(d, config.first_recording + i)
            for d, spec in enumerate(config.domains) for i in range(spec.recordings)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda j: make_recording(config, *j), jobs))
    return [make_recording(config, d, r) for d, r in jobs]


def generate(config, out_dir, workers=1):
    """Write the corpus under ``out_dir``; returns the generated recordings."""
    recs = make_corpus(config, workers)
    for sub in ("emb", "rttm", "uem", "labels"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    for rec in recs:
        rid = rec.recording_id
        write_text(os.path.join(out_dir, "emb", f"{rid}.emb"),
                      emit_embedding_table(rec.embeddings))
        write_text(os.path.join(out_dir, "rttm", f"{rid}.rttm"), emit_rttm([rec.reference]))
        write_text(os.path.join(out_dir, "uem", f"{rid}.uem"), emit_uem({rid: rec.regions}))
    write_text(os.path.join(out_dir, "labels", "domains.tsv"),
                  emit_domain_labels({r.recording_id: r.domain for r in recs}))
    write_text(os.path.join(out_dir, "labels", "recordings.emb"),
                  emit_recording_embeddings({r.recording_id: pool_recording_embedding(r.embeddings)
                                             for r in recs}))
    return recs


def heterogeneous_config(seed=0, recordings=4, first_recording=0, dim=16):
    """Eleven domains whose within-speaker spread grows from 0.2 to 1.2.

    The spread shifts each domain's best clustering threshold, which is what
    per-domain tuning exploits.
    """
    stds = np.linspace(0.2, 1.2, len(DIHARD_DOMAINS))
    doms = tuple(DomainSpec(name, 20.0, round(float(s), 3), 3, recordings, 8)
                 for name, s in zip(DIHARD_DOMAINS, stds))
    return SynthConfig(seed=seed, dim=dim, domains=doms, first_recording=first_recording)
