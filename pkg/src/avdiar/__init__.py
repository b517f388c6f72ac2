"""avdiar: speaker diarization of episodic video from active-speaker faces.

The toolkit scores speech-to-face associations (visual saliency plus
audio-visual profile matching), clusters the confident active-speaker
faces with DBSCAN to diarize the speech, sweeps leftover segments in via
speech-embedding distances, and evaluates everything with DER. An
audio-only refined spectral-clustering baseline, a synthetic corpus
generator, and a simulated ASD-accuracy study round out the experiment
surface.
"""

from .asd import (Association, CharacterProfile, HciConfig, asd_accuracy,
                  associations_from_csv, associations_to_csv, candidate_tracks,
                  iterate_profile_matching, normalize_vas, profile_match_score,
                  select_active_faces)
from .cluster import (NOISE, ClusterLabels, DistanceMatrix, SpectralParams,
                      cosine_distance, cosine_distance_matrix, dbscan,
                      estimate_num_speakers, refined_affinity, spectral_cluster)
from .corpus import (BoundingBox, EmbeddingMatrix, EpisodeDataset, FaceTrack,
                     ParseError, SpeechSegment, load_embedding_matrix,
                     parse_face_tracks, parse_rttm, validate_dataset,
                     write_embedding_matrix, write_face_tracks, write_rttm)
from .diarize import (DiarizationHypothesis, FilterConfig, PipelineConfig,
                      assign_residual, face_cluster_diarize, filter_associations,
                      run_audio_baseline, run_pipeline, run_pipeline_detailed)
from .evaluation import (DERReport, association_distance_matrix, compute_der,
                         distance_matrix_to_pgm, export_distance_matrix)
from .saliency import (FeatureStack, GradientStack, SaliencyMap, grad_cam,
                       load_tensor_bundle, roi_pool_vas, save_tensor_bundle)
from .simulate import (DegradeResult, SimulationRow, SimulationSpec, degrade_asd,
                       run_simulation)
from .synth import SynthSpec, generate_corpus, write_corpus

__version__ = "0.1.0"

__all__ = [
    "Association", "BoundingBox", "CharacterProfile", "ClusterLabels",
    "DERReport", "DegradeResult", "DiarizationHypothesis", "DistanceMatrix",
    "EmbeddingMatrix", "EpisodeDataset", "FaceTrack", "FeatureStack",
    "FilterConfig", "GradientStack", "HciConfig", "NOISE", "ParseError",
    "PipelineConfig", "SaliencyMap", "SimulationRow", "SimulationSpec",
    "SpectralParams", "SpeechSegment", "SynthSpec", "asd_accuracy",
    "assign_residual", "association_distance_matrix", "associations_from_csv",
    "associations_to_csv", "candidate_tracks", "compute_der", "cosine_distance",
    "cosine_distance_matrix", "dbscan", "degrade_asd", "distance_matrix_to_pgm",
    "estimate_num_speakers", "export_distance_matrix", "face_cluster_diarize",
    "filter_associations", "generate_corpus", "grad_cam",
    "iterate_profile_matching", "load_embedding_matrix", "load_tensor_bundle",
    "normalize_vas", "parse_face_tracks", "parse_rttm", "profile_match_score",
    "refined_affinity", "roi_pool_vas", "run_audio_baseline", "run_pipeline",
    "run_pipeline_detailed", "run_simulation", "save_tensor_bundle",
    "select_active_faces", "spectral_cluster", "validate_dataset",
    "write_corpus", "write_embedding_matrix", "write_face_tracks", "write_rttm",
]
