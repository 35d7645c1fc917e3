"""Per-recording diarization: PCA -> projected PLDA scoring -> AHC -> turns."""

import numpy as np
from sklearn.base import BaseEstimator

from .ahc import ahc_cluster, labels_to_turns
from .embedkit import apply_pca, fit_pca
from .plda import plda_adapt, plda_project, plda_score_pairs


def score_recording(plda, X, pca_fraction, adapt_pool=None, within_frac=0.75):
    """PLDA score matrix of one recording's (already preprocessed) vectors.

    Parameters
    ----------
    plda : PldaModel
        Model in the full embedding space (adapt it beforehand for the
        default adapt-then-project order).
    X : ndarray of shape (n, dim)
    pca_fraction : float
        Energy fraction kept by the recording-level PCA.
    adapt_pool : ndarray, optional
        When given, the *projected* model is adapted on this pool pushed
        through the same PCA (project-then-adapt order).

    Raises
    ------
    DegenerateRecordingError
        When the recording's vectors carry no variance.
    """
    X = np.asarray(X, dtype=np.float64)
    if len(X) < 2:
        return np.zeros((len(X), len(X)))
    proj = fit_pca(X, pca_fraction)
    model = plda_project(plda, proj)
    if adapt_pool is not None:
        model = plda_adapt(model, apply_pca(proj, adapt_pool), within_frac)
    return plda_score_pairs(model, apply_pca(proj, X))


def cluster_scores(scores, threshold):
    if len(scores) < 2:
        return np.zeros(len(scores), dtype=int)
    return ahc_cluster(scores, threshold)


def diarize_recording(es, plda, threshold, pca_fraction, preprocessor=None,
                      adapt_pool=None, within_frac=0.75):
    """Full back-end for one :class:`EmbeddingSet`; returns an Annotation."""
    X = es.vectors if preprocessor is None else preprocessor.transform(es.vectors)
    scores = score_recording(plda, X, pca_fraction, adapt_pool, within_frac)
    labels = cluster_scores(scores, threshold)
    return labels_to_turns(labels, es.segments, es.recording_id)


class RecordingDiarizer(BaseEstimator):
    """Cluster the subsegment embeddings of one recording.

    Parameters
    ----------
    plda : PldaModel
    threshold : float, default=-0.5
        AHC stopping threshold on average PLDA score.
    pca_fraction : float, default=0.3
        Energy fraction kept by the per-recording PCA.
    preprocessor : EmbeddingPreprocessor, optional
        Fitted preprocessor applied before PCA.
    """

    def __init__(self, plda=None, threshold=-0.5, pca_fraction=0.3, preprocessor=None):
        self.plda = plda
        self.threshold = threshold
        self.pca_fraction = pca_fraction
        self.preprocessor = preprocessor

    def fit_predict(self, X, y=None):
        if self.plda is None:
            raise ValueError("RecordingDiarizer needs a PLDA model")
        X = np.asarray(X, dtype=np.float64)
        if self.preprocessor is not None:
            X = self.preprocessor.transform(X)
        scores = score_recording(self.plda, X, self.pca_fraction)
        self.labels_ = cluster_scores(scores, self.threshold)
        return self.labels_

    def diarize(self, es):
        return diarize_recording(es, self.plda, self.threshold, self.pca_fraction,
                                 self.preprocessor)
