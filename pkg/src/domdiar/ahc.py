"""Average-linkage agglomerative clustering on a similarity matrix."""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import check_symmetric
from .annotations import MERGE_TOL, Annotation, Turn


def renumber(labels):
    """Relabel to 0..K-1 in order of first occurrence."""
    mapping = {}
    return np.array([mapping.setdefault(l, len(mapping)) for l in labels], dtype=int)


def ahc_cluster(scores, threshold):
    """Merge clusters while the best average-linkage similarity is >= ``threshold``.

    Linkage between clusters A and B is the mean of ``scores[a, b]`` over
    ``a in A, b in B``; the diagonal is never read. Equal linkages are
    resolved towards the pair with the smallest (min index of A, min index
    of B).

    Returns
    -------
    labels : ndarray of int, shape (n,)
        Cluster ids numbered by first occurrence.
    """
    S = check_symmetric(scores, tol=1e-8, name="scores")
    n = S.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    S = (S + S.T) / 2
    # Each cluster lives at the row of its smallest member; ``sums`` holds
    # the pairwise score totals between live clusters.
    sums = S.copy()
    sizes = np.ones(n)
    link = S.copy()
    np.fill_diagonal(link, -np.inf)
    owner = np.arange(n)
    alive = np.ones(n, dtype=bool)
    for _ in range(n - 1):
        flat = int(np.argmax(link))
        i, j = divmod(flat, n)
        if not link[i, j] >= threshold:
            break
        # argmax returns the first maximum in row-major order, so i < j and
        # (i, j) is the lexicographically smallest tied pair.
        sums[i, :] += sums[j, :]
        sums[:, i] = sums[i, :]
        sizes[i] += sizes[j]
        alive[j] = False
        owner[owner == j] = i
        link[j, :] = -np.inf
        link[:, j] = -np.inf
        row = np.where(alive, sums[i, :] / (sizes[i] * sizes), -np.inf)
        row[i] = -np.inf
        link[i, :] = row
        link[:, i] = row
    return renumber(owner)


class ScoreAHC(ClusterMixin, BaseEstimator):
    """Threshold-stopped average-linkage AHC over a precomputed score matrix.

    Parameters
    ----------
    threshold : float, default=0.0
        Merging stops once no pair of clusters links at or above it.
    """

    def __init__(self, threshold=0.0):
        self.threshold = threshold

    def fit(self, X, y=None):
        self.labels_ = ahc_cluster(X, self.threshold)
        self.n_clusters_ = int(self.labels_.max()) + 1 if len(self.labels_) else 0
        return self


def speaker_name(k):
    return f"spk{k:02d}"


def labels_to_turns(labels, segments, recording_id, channel=1):
    """Turn per-subsegment cluster labels into non-overlapping speaker turns.

    Where consecutive subsegments overlap, the boundary is put at the
    midpoint of the overlap. Adjacent turns of the same speaker are merged.
    """
    labels = list(labels)
    segments = [(float(a), float(b)) for a, b in segments]
    if len(labels) != len(segments):
        raise ValueError(f"{len(labels)} labels for {len(segments)} subsegments")
    if not segments:
        return Annotation(recording_id, ())
    starts = [a for a, _ in segments]
    if any(b < a for a, b in zip(starts, starts[1:])):
        raise ValueError("subsegments must be sorted by onset")
    # running max keeps nested subsegments from opening holes in coverage
    ends = list(np.maximum.accumulate([b for _, b in segments]))
    lo = starts[:]
    hi = ends[:]
    for i in range(len(segments) - 1):
        if starts[i + 1] < ends[i]:
            mid = (starts[i + 1] + ends[i]) / 2
            hi[i] = mid
            lo[i + 1] = mid
    pieces = []
    for a, b, lab in zip(lo, hi, labels):
        if b - a <= 0:
            continue
        if pieces and pieces[-1][2] == lab and a - pieces[-1][1] <= MERGE_TOL:
            pieces[-1][1] = max(pieces[-1][1], b)
        else:
            pieces.append([a, b, lab])
    turns = [Turn(recording_id, channel, a, b - a, speaker_name(int(lab)))
             for a, b, lab in pieces]
    return Annotation(recording_id, turns)
