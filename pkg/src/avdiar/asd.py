"""Speech-to-face association scoring.

The visual score (VAS) says how salient a face track is while a segment
is spoken; it is complemented by a profile matching score (PMS) built
from audio-visual character profiles. Profiles are bootstrapped from high
confidence instances (HCI), grown iteratively: cluster the HCI faces,
derive per-cluster face/speech centroids, score every pair against the
profiles, absorb pairs that now score high, and repeat until nothing is
added.

VAS values are min-max normalized to [0,1] per episode before they are
combined with PMS, so the two terms share a scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .cluster import cosine_distance_matrix, dbscan
from .corpus import EpisodeDataset, FaceTrack, SpeechSegment, TIME_EPS

log = logging.getLogger(__name__)

Pair = tuple[str, str]  # (segment_id, track_id)


@dataclass(frozen=True)
class Association:
    """A scored (segment, track) pair; ``combined`` is always vas + pms."""

    segment_id: str
    track_id: str
    vas: float
    pms: float = 0.0

    @property
    def combined(self) -> float:
        return self.vas + self.pms

    @property
    def pair(self) -> Pair:
        return (self.segment_id, self.track_id)


@dataclass(frozen=True)
class CharacterProfile:
    """Face/speech member sets of one bootstrapped character, with centroids."""

    cluster_id: int
    face_members: frozenset[str]
    speech_members: frozenset[str]
    face_centroid: np.ndarray
    speech_centroid: np.ndarray

    def __post_init__(self):
        if not self.face_members or not self.speech_members:
            raise ValueError("profile member sets must be non-empty")


@dataclass(frozen=True)
class HciConfig:
    """Bootstrap parameters for iterative profile matching."""

    seed_percentile: float = 0.8
    add_threshold: float = 1.0
    max_iterations: int = 10
    dbscan_eps: float = 0.35
    dbscan_min_pts: int = 3

    def __post_init__(self):
        if not 0.0 < self.seed_percentile < 1.0:
            raise ValueError("seed_percentile must lie in (0,1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


def candidate_tracks(segments: list[SpeechSegment],
                     tracks: list[FaceTrack]) -> dict[str, list[str]]:
    """Per segment, the track ids whose time span overlaps it.

    Overlap must have positive length: a track that merely touches a
    segment boundary is not a candidate. Segments with no overlapping
    track map to an empty list (background speech).
    """
    out: dict[str, list[str]] = {}
    for seg in segments:
        hits = [
            tr.id for tr in tracks
            if min(seg.end, tr.end) - max(seg.start, tr.start) > TIME_EPS
        ]
        out[seg.id] = sorted(hits)
    return out


def normalize_vas(vas_scores: dict[Pair, float]) -> dict[Pair, float]:
    """Min-max normalize raw VAS values to [0,1].

    A flat score field maps to all-ones: with no contrast, every pair is
    equally (maximally) confident.
    """
    if not vas_scores:
        return {}
    values = np.array(list(vas_scores.values()), dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return {p: 1.0 for p in vas_scores}
    return {p: (v - lo) / (hi - lo) for p, v in vas_scores.items()}


def build_profiles(hci: set[Pair], dataset: EpisodeDataset, eps: float,
                   min_pts: int) -> list[CharacterProfile]:
    """Character profiles from the current HCI set.

    HCI face tracks are clustered with DBSCAN on cosine distance; each
    cluster's speech members are the segments associated (within HCI)
    with one of its tracks. Noise tracks contribute no profile.
    """
    track_ids = sorted({t for _, t in hci})
    if not track_ids:
        return []
    distances = cosine_distance_matrix(
        track_ids, dataset.face_embeddings.submatrix(track_ids))
    labels = dbscan(distances, eps=eps, min_pts=min_pts)

    profiles = []
    for c in range(labels.num_clusters):
        faces = frozenset(labels.members(c))
        speech = frozenset(s for s, t in hci if t in faces)
        face_centroid = _centroid(dataset.face_embeddings, sorted(faces))
        speech_centroid = _centroid(dataset.speech_embeddings, sorted(speech))
        profiles.append(CharacterProfile(c, faces, speech, face_centroid, speech_centroid))
    return profiles


def _centroid(embeddings, ids: list[str]) -> np.ndarray:
    units = np.stack([embeddings.unit_vector(i) for i in ids])
    mean = units.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0.0:
        # Perfectly antipodal members; an arbitrary but fixed direction.
        return units[0]
    return mean / norm


def profile_match_score(segment_id: str, track_id: str,
                        profiles: list[CharacterProfile],
                        dataset: EpisodeDataset) -> float:
    """Confidence that a segment and a track voice/show the same character.

    For each profile the weaker of the two cosine similarities (speech to
    speech centroid, face to face centroid) is taken, and the best profile
    wins: both modalities must match the same character for a high score.
    Range [-1, 1].
    """
    if not profiles:
        raise ValueError("profiles required")
    speech = dataset.speech_embeddings.unit_vector(segment_id)
    face = dataset.face_embeddings.unit_vector(track_id)
    best = -1.0
    for prof in profiles:
        score = min(float(speech @ prof.speech_centroid),
                    float(face @ prof.face_centroid))
        best = max(best, score)
    return best


def iterate_profile_matching(dataset: EpisodeDataset,
                             candidates: dict[str, list[str]],
                             vas_scores: dict[Pair, float],
                             config: HciConfig) -> list[Association]:
    """Score all candidate pairs with VAS + PMS via iterative profiles.

    The HCI set is seeded with pairs whose normalized VAS reaches the
    seed percentile, profiles are rebuilt from it each round, and pairs
    whose combined score clears ``add_threshold`` are absorbed until a
    fixpoint or the iteration cap. Every candidate pair is returned with
    its normalized VAS and final-round PMS.
    """
    pairs = [(s, t) for s, ts in sorted(candidates.items()) for t in ts]
    missing = [p for p in pairs if p not in vas_scores]
    if missing:
        raise ValueError(f"vas_scores missing {len(missing)} candidate pairs, "
                         f"first {missing[0]}")
    if not pairs:
        raise ValueError("no high-confidence seed: no candidate pairs at all")

    vas_norm = normalize_vas({p: vas_scores[p] for p in pairs})
    values = np.array([vas_norm[p] for p in pairs])
    cut = float(np.quantile(values, config.seed_percentile))
    hci = {p for p in pairs if vas_norm[p] >= cut}
    if not hci:
        raise ValueError("no high-confidence seed")

    pms: dict[Pair, float] = {p: 0.0 for p in pairs}
    for iteration in range(config.max_iterations):
        profiles = build_profiles(hci, dataset,
                                  eps=config.dbscan_eps, min_pts=config.dbscan_min_pts)
        if not profiles:
            log.warning("iteration %d: DBSCAN found no profiles; PMS left at 0", iteration)
            break
        pms = {
            (s, t): profile_match_score(s, t, profiles, dataset) for s, t in pairs
        }
        additions = {
            p for p in pairs if vas_norm[p] + pms[p] > config.add_threshold
        } - hci
        log.debug("iteration %d: %d profiles, %d additions, HCI size %d",
                  iteration, len(profiles), len(additions), len(hci))
        if not additions or iteration == config.max_iterations - 1:
            break
        hci |= additions

    return [Association(s, t, vas=vas_norm[(s, t)], pms=pms[(s, t)]) for s, t in pairs]


def select_active_faces(associations: list[Association],
                        candidates: dict[str, list[str]],
                        score_mode: str = "combined") -> dict[str, str]:
    """Per segment, the candidate track with the best score.

    ``score_mode`` picks the criterion: "vas" or "combined". Score ties
    go to the lexicographically smallest track id. Segments without
    candidates are omitted.
    """
    if score_mode not in ("vas", "combined"):
        raise ValueError(f"unknown score_mode {score_mode!r}")
    scores: dict[Pair, float] = {}
    for a in associations:
        scores[a.pair] = a.vas if score_mode == "vas" else a.combined
    best: dict[str, str] = {}
    for seg_id, track_ids in candidates.items():
        if not track_ids:
            continue
        missing = [t for t in track_ids if (seg_id, t) not in scores]
        if missing:
            raise ValueError(f"segment {seg_id}: unscored candidate tracks {missing}")
        # Scanning in id order with a strict max resolves score ties to the
        # lexicographically smallest track id.
        winner, winner_score = None, -np.inf
        for t in sorted(track_ids):
            if scores[(seg_id, t)] > winner_score:
                winner, winner_score = t, scores[(seg_id, t)]
        best[seg_id] = winner
    return best


def asd_accuracy(predictions: dict[str, str], segments: list[SpeechSegment],
                 tracks: list[FaceTrack], include_background: bool = False) -> float:
    """Duration ratio of correctly predicted faces.

    The numerator is the total duration of segments whose predicted
    track's character equals the segment's speaker. The denominator
    covers segments with at least one candidate track, or every segment
    when ``include_background`` is set. Returns 0.0 for an empty
    denominator.
    """
    seg_by_id = {s.id: s for s in segments}
    for seg_id in predictions:
        if seg_id not in seg_by_id:
            raise ValueError(f"prediction for unknown segment {seg_id!r}")
    track_by_id = {t.id: t for t in tracks}
    candidates = candidate_tracks(segments, tracks)

    denominator = 0.0
    numerator = 0.0
    for seg in segments:
        if not include_background and not candidates[seg.id]:
            continue
        if seg.speaker is None:
            raise ValueError(f"segment {seg.id}: ground-truth speaker required")
        denominator += seg.duration
        predicted = predictions.get(seg.id)
        if predicted is None:
            continue
        track = track_by_id.get(predicted)
        if track is None:
            raise ValueError(f"prediction names unknown track {predicted!r}")
        if track.character == seg.speaker:
            numerator += seg.duration
    if denominator == 0.0:
        return 0.0
    return numerator / denominator


def associations_to_csv(associations: list[Association]) -> str:
    """Associations as CSV with header segment_id,track_id,vas,pms."""
    lines = ["segment_id,track_id,vas,pms"]
    for a in sorted(associations, key=lambda a: (a.segment_id, a.track_id)):
        lines.append(f"{a.segment_id},{a.track_id},{repr(a.vas)},{repr(a.pms)}")
    return "".join(line + "\n" for line in lines)


def associations_from_csv(text: str) -> list[Association]:
    """Parse an associations CSV; the pms column is optional."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty associations CSV")
    header = [h.strip() for h in lines[0].split(",")]
    if header[:3] != ["segment_id", "track_id", "vas"]:
        raise ValueError(f"unexpected associations header {lines[0]!r}")
    has_pms = len(header) > 3 and header[3] == "pms"
    out = []
    seen: set[Pair] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise ValueError(f"line {lineno}: expected {len(header)} fields")
        pair = (cells[0], cells[1])
        if pair in seen:
            raise ValueError(f"line {lineno}: duplicate pair {pair}")
        seen.add(pair)
        pms = float(cells[3]) if has_pms else 0.0
        out.append(Association(cells[0], cells[1], vas=float(cells[2]), pms=pms))
    return out
