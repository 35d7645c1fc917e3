"""Embedding tables, back-end preprocessing and per-recording PCA.

An embedding table holds the subsegment embeddings of a single recording::

    #dim 3
    rec1 0.0 1.5 0.12 -0.4 1.1
    rec1 0.75 2.25 0.10 -0.3 0.9
"""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DegenerateRecordingError, FormatError, check_vectors

# relative slack when comparing cumulative energy to the requested fraction
ENERGY_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Subsegment embeddings of one recording, sorted by onset.

    Attributes
    ----------
    recording_id : str
    times : ndarray of shape (n_rows, 2)
        ``(onset, offset)`` of each subsegment in seconds.
    vectors : ndarray of shape (n_rows, dim)
    """

    recording_id: str
    times: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64).reshape(-1, 2)
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError("vectors must be 2-D")
        if len(times) != len(vectors):
            raise ValueError("times and vectors differ in length")
        if np.any(times[:, 0] >= times[:, 1]):
            raise ValueError("every row needs onset < offset")
        order = np.argsort(times[:, 0], kind="stable")
        times, vectors = times[order], vectors[order]
        times.setflags(write=False)
        vectors.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "vectors", vectors)

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.vectors)

    @property
    def segments(self):
        return [(float(a), float(b)) for a, b in self.times]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (self.recording_id == other.recording_id
                and self.vectors.shape == other.vectors.shape
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.vectors, other.vectors))

    __hash__ = None


def _read_dim_header(line, lineno):
    parts = line[1:].split()
    if len(parts) != 2 or parts[0] != "dim":
        raise FormatError("expected '#dim <d>' header", lineno)
    try:
        dim = int(parts[1])
    except ValueError:
        raise FormatError(f"bad dimension {parts[1]!r}", lineno, 2) from None
    if dim < 1:
        raise FormatError("dimension must be positive", lineno, 2)
    return dim


def parse_embedding_table(text, recording_id=None):
    """Parse an embedding table.

    Parameters
    ----------
    text : str
    recording_id : str, optional
        Used when the table has no data rows (e.g. derived from the file name).
        When given, every row must carry this id.
    """
    dim = None
    rec = recording_id
    times, rows = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if dim is None:
            if not line.startswith("#"):
                raise FormatError("missing '#dim <d>' header", lineno)
            dim = _read_dim_header(line, lineno)
            continue
        if line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 3 + dim:
            raise FormatError(
                f"expected {dim} vector components, got {len(fields) - 3}", lineno)
        if rec is None:
            rec = fields[0]
        elif fields[0] != rec:
            raise FormatError(
                f"recording id {fields[0]!r} differs from {rec!r}; "
                "one recording per table", lineno, 1)
        try:
            values = [float(x) for x in fields[1:]]
        except ValueError as exc:
            raise FormatError(str(exc), lineno) from None
        if not all(math.isfinite(x) for x in values):
            raise FormatError("non-finite value", lineno)
        if not values[0] < values[1]:
            raise FormatError("onset must be < offset", lineno, 3)
        times.append(values[:2])
        rows.append(values[2:])
    if dim is None:
        raise FormatError("empty embedding table (no '#dim' header)")
    if rec is None:
        raise FormatError("table has no rows and no recording id was supplied")
    return EmbeddingSet(rec, np.array(times).reshape(-1, 2),
                        np.array(rows).reshape(-1, dim))


def emit_embedding_table(es):
    # repr gives the shortest string that round-trips the double exactly
    lines = [f"#dim {es.dim}\n"]
    for (a, b), v in zip(es.times, es.vectors):
        nums = " ".join(repr(float(x)) for x in (a, b, *v))
        lines.append(f"{es.recording_id} {nums}\n")
    return "".join(lines)


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------

def length_normalize(v):
    """Scale ``v`` (or each row of a 2-D array) to unit Euclidean norm."""
    v = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot length-normalize a zero vector")
    return v / norms


def _ridge(C):
    return 1e-6 * np.trace(C) / C.shape[0]


def _sym_inv_sqrt(C):
    w, V = np.linalg.eigh(C)
    if np.any(w <= 0):
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return (V / np.sqrt(w)) @ V.T


def fit_center_whiten(vectors):
    """Fit a centering mean and the symmetric whitener ``(C + eps*I)^(-1/2)``.

    ``C`` is the population covariance and ``eps = 1e-6 * trace(C) / dim``.
    """
    X = check_vectors(vectors, min_samples=2, name="vectors")
    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T @ Xc / len(X)
    eps = _ridge(C)
    try:
        W = _sym_inv_sqrt(C + eps * np.eye(C.shape[0]))
    except np.linalg.LinAlgError:
        raise DegenerateRecordingError("covariance is singular even after ridge") from None
    return mean, W


class EmbeddingPreprocessor(TransformerMixin, BaseEstimator):
    """Centering, whitening and length normalization, applied in that order.

    Parameters
    ----------
    center : bool, default=False
    whiten : bool, default=False
        Whitening implies centering with the same fitted mean.
    length_norm : bool, default=True
    """

    def __init__(self, center=False, whiten=False, length_norm=True):
        self.center = center
        self.whiten = whiten
        self.length_norm = length_norm

    def fit(self, X, y=None):
        X = check_vectors(X, name="X")
        self.n_features_in_ = X.shape[1]
        self.mean_ = np.zeros(X.shape[1])
        self.whitener_ = None
        if self.whiten:
            self.mean_, self.whitener_ = fit_center_whiten(X)
        elif self.center:
            self.mean_ = X.mean(axis=0)
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_vectors(X, dim=self.n_features_in_, name="X")
        if self.center or self.whiten:
            X = X - self.mean_
        if self.whitener_ is not None:
            X = X @ self.whitener_.T
        if self.length_norm:
            X = length_normalize(X)
        return X

    @property
    def is_stateless(self):
        return not (self.center or self.whiten)


def save_preprocessor(pre):
    lines = ["#preprocess v1\n",
             f"flags center={int(pre.center)} whiten={int(pre.whiten)} "
             f"length_norm={int(pre.length_norm)}\n"]
    if hasattr(pre, "mean_"):
        d = pre.n_features_in_
        lines.append(f"dim {d}\n")
        lines.append("mean " + " ".join(repr(float(x)) for x in pre.mean_) + "\n")
        if pre.whitener_ is not None:
            lines.append("whitener\n")
            for row in pre.whitener_:
                lines.append(" ".join(repr(float(x)) for x in row) + "\n")
    return "".join(lines)


def load_preprocessor(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "#preprocess v1":
        raise FormatError("expected '#preprocess v1' header", 1)
    try:
        flags = dict(kv.split("=") for kv in lines[1].split()[1:])
        pre = EmbeddingPreprocessor(center=bool(int(flags["center"])),
                                    whiten=bool(int(flags["whiten"])),
                                    length_norm=bool(int(flags["length_norm"])))
        if len(lines) > 2:
            d = int(lines[2].split()[1])
            pre.n_features_in_ = d
            pre.mean_ = np.array([float(x) for x in lines[3].split()[1:]])
            pre.whitener_ = None
            if len(lines) > 4:
                pre.whitener_ = np.array([[float(x) for x in ln.split()]
                                          for ln in lines[5:5 + d]])
                if pre.whitener_.shape != (d, d):
                    raise ValueError("whitener shape")
    except (IndexError, KeyError, ValueError) as exc:
        raise FormatError(f"malformed preprocessor file: {exc}") from None
    return pre


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PcaProjection:
    """Fitted PCA: ``apply(v) = basis @ (v - mean)``.

    ``basis`` rows are orthonormal principal directions, each with its first
    nonzero component non-negative; ``eigenvalues`` are the retained variances.
    """

    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    energy_fraction_target: float

    @property
    def dim(self):
        return self.basis.shape[1]

    @property
    def n_components(self):
        return self.basis.shape[0]

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.eye(dim), np.ones(dim), 1.0)


def _fix_signs(V):
    # V has directions as rows
    for row in V:
        nz = np.flatnonzero(np.abs(row) > 1e-12 * np.max(np.abs(row)))
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return V


def select_n_components(eigenvalues, energy_fraction, max_components=None):
    """Smallest ``k`` whose leading eigenvalues hold ``energy_fraction`` of the total.

    ``eigenvalues`` must be sorted in descending order.
    """
    lam = np.clip(np.asarray(eigenvalues, dtype=np.float64), 0.0, None)
    total = lam.sum()
    cum = np.cumsum(lam)
    target = energy_fraction * total * (1.0 - ENERGY_RTOL)
    k = int(np.searchsorted(cum, target, side="left")) + 1
    k = min(max(k, 1), len(lam))
    if max_components is not None:
        k = min(k, max_components)
    return max(k, 1)


def fit_pca(vectors, energy_fraction):
    """Fit a PCA keeping the fewest components reaching ``energy_fraction``.

    Covariance is the population form (divide by N). The component count is
    further capped at ``min(dim, N - 1)``.

    Raises
    ------
    DegenerateRecordingError
        If the vectors carry no variance.
    """
    if not 0.0 < energy_fraction <= 1.0:
        raise ValueError(f"energy_fraction must be in (0, 1], got {energy_fraction}")
    X = check_vectors(vectors, min_samples=2, name="vectors")
    n, d = X.shape
    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T @ Xc / n
    lam, V = np.linalg.eigh(C)
    lam, V = lam[::-1], V[:, ::-1]
    lam = np.clip(lam, 0.0, None)
    scale = max(1.0, float(np.mean(np.sum(X * X, axis=1))))
    if lam.sum() <= 1e-24 * scale:
        raise DegenerateRecordingError("degenerate recording: zero total energy")
    k = select_n_components(lam, energy_fraction, max_components=min(d, n - 1))
    basis = _fix_signs(np.ascontiguousarray(V[:, :k].T))
    return PcaProjection(mean, basis, lam[:k].copy(), float(energy_fraction))


def apply_pca(proj, v):
    """Project a vector (or rows of a 2-D array) onto the retained subspace."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != proj.dim:
        raise ValueError(f"expected length {proj.dim}, got {v.shape[-1]}")
    return (v - proj.mean) @ proj.basis.T


class EnergyPCA(TransformerMixin, BaseEstimator):
    """PCA whose dimensionality is chosen by retained energy fraction.

    Parameters
    ----------
    energy_fraction : float, default=0.3
    """

    def __init__(self, energy_fraction=0.3):
        self.energy_fraction = energy_fraction

    def fit(self, X, y=None):
        self.projection_ = fit_pca(X, self.energy_fraction)
        self.n_features_in_ = self.projection_.dim
        self.n_components_ = self.projection_.n_components
        return self

    def transform(self, X):
        check_is_fitted(self, "projection_")
        return apply_pca(self.projection_, check_vectors(X, dim=self.n_features_in_))


# ---------------------------------------------------------------------------
# subsegmentation
# ---------------------------------------------------------------------------

def window_segments(speech, window=1.5, shift=0.75, min_dur=0.25):
    """Cut each speech interval into overlapping fixed-length windows.

    An interval no longer than ``window`` becomes a single subsegment.
    Otherwise windows start every ``shift`` seconds and are clipped at the
    interval end; clipped windows shorter than ``min_dur`` are dropped.
    """
    if not window > 0 or not 0 < shift <= window:
        raise ValueError("need window > 0 and 0 < shift <= window")
    out = []
    for a, b in speech:
        if b - a <= window:
            out.append((a, b))
            continue
        segs = []
        k = 0
        while a + k * shift < b:
            start = a + k * shift
            segs.append((start, min(start + window, b)))
            k += 1
        out.extend(s for s in segs if s[1] - s[0] >= min_dur)
    return out
