"""Acoustic domain identification by cosine nearest neighbour.

Every labelled development recording is kept as an exemplar; a new recording
takes the domain of the exemplar with the highest cosine similarity.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import FormatError, check_vector, check_vectors
from .embedkit import _read_dim_header, length_normalize

# cosine similarities closer than this are a tie
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class AdiModel:
    """Exemplar store for 1-NN domain classification.

    Attributes
    ----------
    vectors : ndarray of shape (n_exemplars, dim)
        Exemplar embeddings as given (not normalized).
    domains : tuple of str
    recording_ids : tuple of str
    """

    vectors: np.ndarray
    domains: tuple
    recording_ids: tuple

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.domains)

    @property
    def classes(self):
        return sorted(set(self.domains))


def adi_train(labeled):
    """Memorize ``(embedding, domain, recording_id)`` triples as exemplars."""
    labeled = list(labeled)
    if not labeled:
        raise ValueError("need at least one labelled recording")
    vecs, domains, recs = zip(*labeled)
    vecs = [np.asarray(v, dtype=np.float64).ravel() for v in vecs]
    if len({len(v) for v in vecs}) != 1:
        raise ValueError("embeddings have inconsistent dimensions")
    X = check_vectors(np.vstack(vecs), name="embeddings")
    if np.any(np.linalg.norm(X, axis=1) == 0):
        raise ValueError("zero embedding vector in training data")
    for d in domains:
        if not isinstance(d, str) or not d:
            raise ValueError(f"domain labels must be non-empty strings, got {d!r}")
    X.setflags(write=False)
    return AdiModel(X, tuple(domains), tuple(str(r) for r in recs))


def cosine_similarities(model, query):
    q = check_vector(query, dim=model.dim, name="query")
    qn = np.linalg.norm(q)
    if qn == 0:
        raise ValueError("zero query vector")
    E = length_normalize(model.vectors)
    return np.clip(E @ (q / qn), -1.0, 1.0)


def adi_predict(model, query):
    """Return ``(domain, similarity, neighbor_id)`` of the nearest exemplar.

    Ties on similarity go to the lexicographically smallest recording id.
    """
    sims = cosine_similarities(model, query)
    best = sims.max()
    tied = np.flatnonzero(sims >= best - TIE_TOL)
    i = min(tied, key=lambda j: model.recording_ids[j])
    return model.domains[i], float(sims[i]), model.recording_ids[i]


def pool_recording_embedding(es):
    """Mean of the subsegment vectors, length-normalized."""
    if len(es) == 0:
        raise ValueError(f"recording {es.recording_id!r} has no embeddings")
    m = es.vectors.mean(axis=0)
    if np.linalg.norm(m) == 0:
        raise ValueError(f"recording {es.recording_id!r} pools to a zero vector")
    return length_normalize(m)


class DomainClassifier(ClassifierMixin, BaseEstimator):
    """scikit-learn wrapper around :func:`adi_train` / :func:`adi_predict`."""

    def fit(self, X, y, recording_ids=None):
        X = check_vectors(X, name="X")
        if recording_ids is None:
            recording_ids = [f"{i:06d}" for i in range(len(X))]
        self.model_ = adi_train(zip(X, [str(v) for v in y], recording_ids))
        self.classes_ = np.array(self.model_.classes)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        return np.array([d for d, _, _ in self.kneighbor(X)])

    def kneighbor(self, X):
        """``(domain, similarity, neighbor_id)`` for every row of ``X``."""
        check_is_fitted(self, "model_")
        X = check_vectors(X, dim=self.n_features_in_, name="X")
        return [adi_predict(self.model_, x) for x in X]


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def parse_domain_labels(text):
    """``<recording_id>\\t<domain>`` lines to a dict."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 2:
            raise FormatError(f"expected 2 fields, got {len(fields)}", lineno)
        if fields[0] in out and out[fields[0]] != fields[1]:
            raise FormatError(f"conflicting labels for {fields[0]!r}", lineno, 2)
        out[fields[0]] = fields[1]
    return out


def emit_domain_labels(labels):
    return "".join(f"{rec}\t{labels[rec]}\n" for rec in sorted(labels))


def parse_recording_embeddings(text):
    """``#dim <d>`` header, then ``<recording_id> <v1> ... <vd>`` lines."""
    dim = None
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if dim is None:
            dim = _read_dim_header(line, lineno)
            continue
        fields = line.split()
        if len(fields) != 1 + dim:
            raise FormatError(f"expected {dim} components, got {len(fields) - 1}", lineno)
        try:
            out[fields[0]] = np.array([float(x) for x in fields[1:]])
        except ValueError as exc:
            raise FormatError(str(exc), lineno) from None
    if dim is None:
        raise FormatError("missing '#dim <d>' header")
    return dim, out


def emit_recording_embeddings(embeddings):
    dims = {len(v) for v in embeddings.values()}
    if len(dims) != 1:
        raise ValueError("recording embeddings must share one dimension")
    lines = [f"#dim {dims.pop()}\n"]
    for rec in sorted(embeddings):
        lines.append(rec + " " + " ".join(repr(float(x)) for x in embeddings[rec]) + "\n")
    return "".join(lines)


def save_adi_model(model):
    lines = ["#adi v1\n", f"#dim {model.dim}\n"]
    for v, d, r in zip(model.vectors, model.domains, model.recording_ids):
        lines.append(f"{r}\t{d}\t" + " ".join(repr(float(x)) for x in v) + "\n")
    return "".join(lines)


def load_adi_model(text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "#adi v1":
        raise FormatError("expected '#adi v1' header", 1)
    dim = _read_dim_header(lines[1], 2) if len(lines) > 1 else None
    if dim is None:
        raise FormatError("missing '#dim <d>' header", 2)
    items = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError("expected '<rec>\\t<domain>\\t<vector>'", lineno)
        vec = np.array([float(x) for x in parts[2].split()])
        if len(vec) != dim:
            raise FormatError(f"expected {dim} components, got {len(vec)}", lineno)
        items.append((vec, parts[1], parts[0]))
    return adi_train(items)
