"""Domain-adaptive speaker diarization back-end.

Acoustic domain identification picks a per-domain AHC threshold and PCA
energy fraction from a tuned lookup table; subsegment embeddings are then
scored with PLDA and clustered. DER/JER scoring is included.
"""

from .adi import AdiModel, DomainClassifier, adi_predict, adi_train, pool_recording_embedding
from .ahc import ScoreAHC, ahc_cluster, labels_to_turns
from .annotations import (Annotation, Timeline, Turn, emit_rttm, parse_rttm, parse_uem,
                          timeline_crop, timeline_duration, timeline_intersect, timeline_union)
from .embedkit import (EmbeddingPreprocessor, EmbeddingSet, EnergyPCA, PcaProjection, apply_pca,
                       fit_center_whiten, fit_pca, length_normalize, parse_embedding_table,
                       window_segments)
from .metrics import DerBreakdown, brute_force_mapping, compute_der, compute_jer
from .pipeline import RecordingDiarizer, diarize_recording
from .plda import PLDA, PldaModel, plda_adapt, plda_estimate, plda_project, plda_score_pairs
from .tuning import (LookupTable, SweepGrid, TuningEntry, build_lookup_table, evaluate_config,
                     lookup, sweep_domain)

__version__ = "0.1.0"

__all__ = [
    "adi_predict", "adi_train", "AdiModel", "ahc_cluster", "Annotation", "apply_pca",
    "brute_force_mapping", "build_lookup_table", "compute_der", "compute_jer", "DerBreakdown",
    "diarize_recording", "DomainClassifier", "EmbeddingPreprocessor", "EmbeddingSet",
    "emit_rttm", "EnergyPCA", "evaluate_config", "fit_center_whiten", "fit_pca",
    "labels_to_turns", "length_normalize", "lookup", "LookupTable", "parse_embedding_table",
    "parse_rttm", "parse_uem", "PcaProjection", "PLDA", "plda_adapt", "plda_estimate",
    "plda_project", "plda_score_pairs", "PldaModel", "pool_recording_embedding",
    "RecordingDiarizer", "ScoreAHC", "sweep_domain", "SweepGrid", "Timeline", "timeline_crop",
    "timeline_duration", "timeline_intersect", "timeline_union", "TuningEntry", "Turn",
    "window_segments",
]
