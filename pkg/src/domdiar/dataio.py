"""Loading corpora from files or directories."""

import glob
import os

from .adi import parse_domain_labels, parse_recording_embeddings
from .annotations import parse_rttm, parse_uem
from .embedkit import parse_embedding_table


def read_text(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def write_text(path, text):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _files(path, ext):
    if os.path.isdir(path):
        return sorted(glob.glob(os.path.join(path, f"*{ext}")))
    return [path]


def load_embedding_dir(path):
    """``{recording_id: EmbeddingSet}`` from a directory of ``<rec>.emb`` files."""
    out = {}
    for f in _files(path, ".emb"):
        rec = os.path.basename(f)[:-len(".emb")] if f.endswith(".emb") else None
        es = parse_embedding_table(read_text(f), recording_id=rec)
        if es.recording_id in out:
            raise ValueError(f"recording {es.recording_id!r} appears in two tables")
        out[es.recording_id] = es
    return out


def load_rttm(path):
    out = {}
    for f in _files(path, ".rttm"):
        for ann in parse_rttm(read_text(f)):
            if ann.recording_id in out:
                prev = out[ann.recording_id]
                ann = type(ann)(ann.recording_id, prev.turns + ann.turns)
            out[ann.recording_id] = ann
    return out


def load_uem(path):
    out = {}
    for f in _files(path, ".uem"):
        for rec, tl in parse_uem(read_text(f)).items():
            if rec in out:
                raise ValueError(f"recording {rec!r} appears in two UEM files")
            out[rec] = tl
    return out


def load_labels(path):
    return parse_domain_labels(read_text(path))


def load_recording_embeddings(path):
    return parse_recording_embeddings(read_text(path))[1]


def load_recording_list(path):
    return [ln.split()[0] for ln in read_text(path).splitlines() if ln.strip()]
