"""End-to-end diarization pipelines.

The face pipeline keeps, per segment, its best-scored face association,
filters the survivors by confidence, DBSCAN-clusters their face
embeddings, and maps the clusters back onto speech segments. Everything
left over (background speech, filtered-out segments, DBSCAN noise) is
assigned to the cluster with the least average cosine distance in the
speech-embedding space.

The audio-only baseline skips faces entirely: refined spectral clustering
of the speech embeddings with an eigengap speaker-count estimate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import asd as asd_mod
from .asd import Association, HciConfig
from .cluster import (ClusterLabels, SpectralParams, cosine_distance_matrix, dbscan,
                      estimate_num_speakers, refined_affinity, spectral_cluster_ids)
from .corpus import EpisodeDataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterConfig:
    """Association confidence filter: absolute threshold or top fraction."""

    mode: str = "top"  # "top" keeps the best x of segments, "absolute" uses a cut
    value: float = 1.0

    def __post_init__(self):
        if self.mode not in ("top", "absolute"):
            raise ValueError(f"unknown filter mode {self.mode!r}")
        if self.mode == "top" and not 0.0 < self.value <= 1.0:
            raise ValueError("top fraction must lie in (0,1]")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the face pipeline needs; also carries the baseline knobs."""

    filter: FilterConfig = FilterConfig()
    eps: float = 0.35
    min_pts: int = 3
    score_mode: str = "combined"  # "vas" or "combined"
    hci: HciConfig = HciConfig()
    spectral: SpectralParams = SpectralParams()
    rng_seed: int = 0


@dataclass(frozen=True)
class DiarizationHypothesis:
    """Segment-id to cluster-label assignment plus the unassigned leftovers."""

    assignments: dict[str, int]
    unassigned: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "assignments", dict(self.assignments))
        object.__setattr__(self, "unassigned", frozenset(self.unassigned))
        overlap = set(self.assignments) & self.unassigned
        if overlap:
            raise ValueError(f"segments both assigned and unassigned: {sorted(overlap)}")

    @property
    def num_clusters(self) -> int:
        return len(set(self.assignments.values()))

    def cluster_sizes(self) -> dict[int, int]:
        sizes: dict[int, int] = {}
        for lab in self.assignments.values():
            sizes[lab] = sizes.get(lab, 0) + 1
        return dict(sorted(sizes.items()))

    def covers(self, segment_ids) -> bool:
        return set(self.assignments) | set(self.unassigned) == set(segment_ids)


@dataclass
class PipelineReport:
    """Hypothesis plus the bookkeeping the run report wants."""

    hypothesis: DiarizationHypothesis
    num_clusters: int = 0
    cluster_sizes: dict[int, int] = field(default_factory=dict)
    clustered_segments: int = 0
    noisy_segments: int = 0
    filtered_out_segments: int = 0
    background_segments: int = 0
    residual_segments: int = 0


def filter_associations(associations: list[Association],
                        best_per_segment: dict[str, str],
                        config: FilterConfig) -> list[Association]:
    """Keep the confident subset of each segment's best association.

    Absolute mode keeps combined > threshold. Top mode keeps the
    ceil(x * n) highest-combined associations, ties at the cut going to
    the lexicographically smaller segment id.
    """
    by_pair = {a.pair: a for a in associations}
    best: list[Association] = []
    for seg_id in sorted(best_per_segment):
        pair = (seg_id, best_per_segment[seg_id])
        if pair not in by_pair:
            raise ValueError(f"best pair {pair} missing from associations")
        best.append(by_pair[pair])

    if config.mode == "absolute":
        return [a for a in best if a.combined > config.value]
    keep = math.ceil(config.value * len(best))
    ranked = sorted(best, key=lambda a: (-a.combined, a.segment_id))
    return sorted(ranked[:keep], key=lambda a: a.segment_id)


def face_cluster_diarize(selected: list[Association], dataset: EpisodeDataset,
                         eps: float, min_pts: int):
    """Cluster the selected associations' face tracks and induce speech clusters.

    Returns (face ClusterLabels, speech clusters as {cluster: set of
    segment ids}, noisy segment ids whose track was DBSCAN noise).
    """
    if not selected:
        raise ValueError("no associations to cluster")
    track_ids = sorted({a.track_id for a in selected})
    distances = cosine_distance_matrix(
        track_ids, dataset.face_embeddings.submatrix(track_ids))
    labels = dbscan(distances, eps=eps, min_pts=min_pts)

    # Every clustered track came from a selected association, so every
    # cluster receives at least one speech member.
    speech_clusters: dict[int, set[str]] = {c: set() for c in range(labels.num_clusters)}
    noisy: set[str] = set()
    for a in selected:
        lab = labels.label_of(a.track_id)
        if lab == -1:
            noisy.add(a.segment_id)
        else:
            speech_clusters[lab].add(a.segment_id)
    return labels, speech_clusters, noisy


def assign_residual(query_ids: list[str], speech_clusters: dict[int, set[str]],
                    dataset: EpisodeDataset) -> dict[str, int]:
    """Assign each query segment to the cluster with least average cosine distance.

    Distances are averaged over the cluster's member segments (not a
    centroid). Ties go to the lowest cluster id.
    """
    if not speech_clusters:
        raise ValueError("no clusters to assign residual segments to")
    members = {
        c: np.stack([dataset.speech_embeddings.unit_vector(s) for s in sorted(ids)])
        for c, ids in sorted(speech_clusters.items())
    }
    out: dict[str, int] = {}
    for q in query_ids:
        qv = dataset.speech_embeddings.unit_vector(q)
        best_c, best_d = None, np.inf
        for c in sorted(members):
            avg_dist = float(np.mean(1.0 - members[c] @ qv))
            if avg_dist < best_d:
                best_c, best_d = c, avg_dist
        out[q] = best_c
    return out


def diarize_selected(selected: list[Association], dataset: EpisodeDataset,
                     eps: float, min_pts: int) -> PipelineReport:
    """Shared tail of the face pipeline: cluster selected associations,
    then sweep every remaining segment in via residual assignment."""
    labels, speech_clusters, noisy = face_cluster_diarize(
        selected, dataset, eps=eps, min_pts=min_pts)

    assignments: dict[str, int] = {}
    for c, segs in speech_clusters.items():
        for s in segs:
            assignments[s] = c

    residual = sorted(s.id for s in dataset.segments if s.id not in assignments)
    if speech_clusters:
        assignments.update(assign_residual(residual, speech_clusters, dataset))
        unassigned: frozenset[str] = frozenset()
    else:
        unassigned = frozenset(s.id for s in dataset.segments)
        assignments = {}

    hyp = DiarizationHypothesis(assignments, unassigned)
    return PipelineReport(
        hypothesis=hyp,
        num_clusters=len(speech_clusters),
        cluster_sizes=hyp.cluster_sizes(),
        clustered_segments=sum(len(s) for s in speech_clusters.values()),
        noisy_segments=len(noisy),
        residual_segments=len(residual),
    )


def run_pipeline_detailed(dataset: EpisodeDataset,
                          vas_scores: dict | None = None,
                          associations: list[Association] | None = None,
                          config: PipelineConfig = PipelineConfig()) -> PipelineReport:
    """Face pipeline with run bookkeeping.

    Provide either raw ``vas_scores`` (scored here, with profile matching
    when score_mode is "combined") or pre-scored ``associations``.
    """
    if (vas_scores is None) == (associations is None):
        raise ValueError("provide exactly one of vas_scores or associations")
    candidates = asd_mod.candidate_tracks(list(dataset.segments), list(dataset.tracks))

    if associations is None and not any(candidates.values()):
        # All background speech: fall through to the clustering stage, which
        # reports the situation as "no associations to cluster".
        associations = []
    if associations is None:
        if config.score_mode == "combined":
            associations = asd_mod.iterate_profile_matching(
                dataset, candidates, vas_scores, config.hci)
        else:
            pairs = {}
            for s, ts in candidates.items():
                for t in ts:
                    if (s, t) not in vas_scores:
                        raise ValueError(f"vas_scores missing candidate pair {(s, t)}")
                    pairs[(s, t)] = vas_scores[(s, t)]
            norm = asd_mod.normalize_vas(pairs)
            associations = [Association(s, t, vas=norm[(s, t)]) for s, t in sorted(norm)]

    best = asd_mod.select_active_faces(associations, candidates, config.score_mode)
    selected = filter_associations(associations, best, config.filter)
    log.info("pipeline: %d segments, %d with faces, %d kept after filtering",
             len(dataset.segments), len(best), len(selected))

    report = diarize_selected(selected, dataset, eps=config.eps, min_pts=config.min_pts)
    report.filtered_out_segments = len(best) - len(selected)
    report.background_segments = sum(1 for ts in candidates.values() if not ts)
    return report


def run_pipeline(dataset: EpisodeDataset,
                 vas_scores: dict | None = None,
                 associations: list[Association] | None = None,
                 config: PipelineConfig = PipelineConfig()) -> DiarizationHypothesis:
    """Face pipeline: select, filter, cluster faces, assign the rest."""
    return run_pipeline_detailed(dataset, vas_scores, associations, config).hypothesis


def run_audio_baseline(dataset: EpisodeDataset,
                       params: SpectralParams = SpectralParams()) -> DiarizationHypothesis:
    """Audio-only diarization over all segments.

    Refined cosine affinity of the speech embeddings, eigengap speaker
    count, then seeded spectral clustering. Every segment gets a label.
    """
    seg_ids = sorted(s.id for s in dataset.segments)
    if len(seg_ids) < 2:
        raise ValueError("audio baseline needs at least 2 segments")
    emb = dataset.speech_embeddings.submatrix(seg_ids)
    affinity = refined_affinity(emb, params)
    count = estimate_num_speakers(affinity, params.max_speakers)
    labels: ClusterLabels = spectral_cluster_ids(seg_ids, affinity, count, params)
    log.info("audio baseline: %d segments, estimated %d speakers", len(seg_ids), count)
    return DiarizationHypothesis(labels.as_dict())
