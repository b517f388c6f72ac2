"""Deterministic synthetic episode generator.

Builds desk-scale episodes with known ground truth: per-character face
and speech centroids separated on the unit sphere, members drawn by
Gaussian perturbation and renormalization, a non-overlapping segment
timeline, one same-character face track per foreground segment plus a
few distractor tracks, and VAS scores that are clean or noisy on demand.
Everything is a pure function of the spec, so a seed pins the corpus
byte-for-byte.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .asd import Pair
from .corpus import (BoundingBox, EmbeddingMatrix, EpisodeDataset, FaceTrack,
                     SpeechSegment, write_embedding_matrix, write_face_tracks,
                     write_rttm)

RECORDING = "synth"

CENTROID_RETRY_CAP = 200
FRAME_PERIOD = 0.1  # seconds between track frames


@dataclass(frozen=True)
class SynthSpec:
    """Shape of a generated episode.

    ``intra_spread`` is the Gaussian scale applied around each character
    centroid before renormalization; ``speech_intra_spread`` overrides it
    for the speech space only (None follows ``intra_spread``), so face
    and voice separability can be degraded independently.
    """

    characters: int = 4
    segments_per_character: int = 25
    face_dim: int = 64
    speech_dim: int = 32
    intra_spread: float = 0.05
    speech_intra_spread: float | None = None
    min_centroid_distance: float = 0.8
    background_fraction: float = 0.1
    vas_noise: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.characters < 1 or self.segments_per_character < 1:
            raise ValueError("characters and segments_per_character must be >= 1")
        if self.face_dim < 1 or self.speech_dim < 1:
            raise ValueError("embedding dims must be positive")
        if self.intra_spread < 0 or self.vas_noise < 0:
            raise ValueError("spreads and noise scales must be >= 0")
        if not 0.0 <= self.background_fraction < 1.0:
            raise ValueError("background_fraction must lie in [0,1)")

    @property
    def speech_spread(self) -> float:
        return self.intra_spread if self.speech_intra_spread is None else self.speech_intra_spread


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _separated_centroids(count: int, dim: int, min_distance: float,
                         rng: np.random.Generator) -> np.ndarray:
    """Unit vectors with pairwise cosine distance >= min_distance."""
    centroids: list[np.ndarray] = []
    attempts = 0
    while len(centroids) < count:
        if attempts >= CENTROID_RETRY_CAP * count:
            raise ValueError(
                f"could not separate {count} centroids by {min_distance} in dim {dim}")
        attempts += 1
        cand = _unit(rng.normal(size=dim))
        if all(1.0 - float(cand @ c) >= min_distance for c in centroids):
            centroids.append(cand)
    return np.stack(centroids)


def _member(centroid: np.ndarray, spread: float, rng: np.random.Generator) -> np.ndarray:
    return _unit(centroid + spread * rng.normal(size=centroid.shape))


def generate_corpus(spec: SynthSpec):
    """Generate an episode with ground truth.

    Returns (dataset, gt_associations, gt_vas): the dataset itself, the
    true segment-to-track pairing for foreground segments, and VAS scores
    for every candidate pair (true pairs high, distractors low, both
    perturbed by ``vas_noise``).
    """
    rng = np.random.default_rng(spec.rng_seed)
    names = [f"char{c}" for c in range(spec.characters)]
    face_centroids = _separated_centroids(
        spec.characters, spec.face_dim, spec.min_centroid_distance, rng)
    speech_centroids = _separated_centroids(
        spec.characters, spec.speech_dim, spec.min_centroid_distance, rng)

    total = spec.characters * spec.segments_per_character
    order = rng.permutation(np.repeat(np.arange(spec.characters),
                                      spec.segments_per_character))
    background = np.zeros(total, dtype=bool)
    n_background = int(round(spec.background_fraction * total))
    if n_background:
        background[rng.choice(total, size=n_background, replace=False)] = True

    segments: list[SpeechSegment] = []
    tracks: list[FaceTrack] = []
    speech_ids: list[str] = []
    speech_rows: list[np.ndarray] = []
    face_ids: list[str] = []
    face_rows: list[np.ndarray] = []
    gt_associations: dict[str, str] = {}
    gt_vas: dict[Pair, float] = {}

    clock = 0.0
    for i, char in enumerate(order):
        start = round(clock + float(rng.uniform(0.1, 0.5)), 3)
        duration = round(float(rng.uniform(1.0, 4.0)), 3)
        clock = start + duration
        seg_id = f"{RECORDING}_{i}"
        segments.append(SpeechSegment(
            id=seg_id, recording=RECORDING, start=start, duration=duration,
            speaker=names[char]))
        speech_ids.append(seg_id)
        speech_rows.append(_member(speech_centroids[char], spec.speech_spread, rng))

        if background[i]:
            continue

        true_track = _make_track(f"trk_{i}_a", char, names, start, duration,
                                 face_centroids, spec, rng,
                                 face_ids, face_rows)
        tracks.append(true_track)
        gt_associations[seg_id] = true_track.id
        noise = abs(float(rng.normal(0.0, spec.vas_noise))) if spec.vas_noise > 0 else 0.0
        gt_vas[(seg_id, true_track.id)] = 1.0 - noise

        if spec.characters > 1:
            others = [c for c in range(spec.characters) if c != char]
            for j in range(int(rng.integers(0, 3))):
                distractor_char = int(rng.choice(others))
                distractor = _make_track(f"trk_{i}_d{j}", distractor_char, names,
                                         start, duration, face_centroids, spec, rng,
                                         face_ids, face_rows)
                tracks.append(distractor)
                noise = abs(float(rng.normal(0.0, spec.vas_noise))) if spec.vas_noise > 0 else 0.0
                gt_vas[(seg_id, distractor.id)] = noise

    dataset = EpisodeDataset(
        recording=RECORDING,
        segments=tuple(segments),
        tracks=tuple(tracks),
        face_embeddings=EmbeddingMatrix(face_ids, np.stack(face_rows)),
        speech_embeddings=EmbeddingMatrix(speech_ids, np.stack(speech_rows)),
    )
    return dataset, gt_associations, gt_vas


def _make_track(track_id: str, char: int, names: list[str], start: float,
                duration: float, face_centroids: np.ndarray, spec: SynthSpec,
                rng: np.random.Generator,
                face_ids: list[str], face_rows: list[np.ndarray]) -> FaceTrack:
    """A track of the given character spanning most of the segment."""
    t0 = start + 0.1 * duration
    t1 = start + 0.9 * duration
    times = [round(t0 + k * FRAME_PERIOD, 3) for k in range(int((t1 - t0) / FRAME_PERIOD) + 1)]
    x1 = float(rng.uniform(0.0, 0.6))
    y1 = float(rng.uniform(0.0, 0.6))
    box = BoundingBox(x1, y1, x1 + 0.3, y1 + 0.3)
    track = FaceTrack(
        id=track_id, recording=RECORDING,
        frames=tuple((t, box) for t in times),
        character=names[char])
    face_ids.append(track_id)
    face_rows.append(_member(face_centroids[char], spec.intra_spread, rng))
    return track


# ---------------------------------------------------------------------------
# On-disk corpus
# ---------------------------------------------------------------------------

SEGMENTS_FILE = "ref.rttm"
TRACKS_FILE = "tracks.jsonl"
FACE_EMB_FILE = "face_embeddings.csv"
SPEECH_EMB_FILE = "speech_embeddings.csv"
ASSOCIATIONS_FILE = "associations.csv"


def write_corpus(outdir: str, dataset: EpisodeDataset, gt_vas: dict[Pair, float]) -> dict[str, str]:
    """Write a generated corpus in the standard episode file formats.

    The associations CSV carries the ground-truth VAS scores, i.e. the
    exact input the scoring pipeline would receive from a perfect visual
    front end. Returns the written paths keyed by role.
    """
    os.makedirs(outdir, exist_ok=True)
    paths = {
        "rttm": os.path.join(outdir, SEGMENTS_FILE),
        "tracks": os.path.join(outdir, TRACKS_FILE),
        "face_embeddings": os.path.join(outdir, FACE_EMB_FILE),
        "speech_embeddings": os.path.join(outdir, SPEECH_EMB_FILE),
        "associations": os.path.join(outdir, ASSOCIATIONS_FILE),
    }
    with open(paths["rttm"], "w", encoding="utf-8") as fh:
        fh.write(write_rttm(list(dataset.segments)))
    with open(paths["tracks"], "w", encoding="utf-8") as fh:
        fh.write(write_face_tracks(list(dataset.tracks)))
    with open(paths["face_embeddings"], "w", encoding="utf-8") as fh:
        fh.write(write_embedding_matrix(dataset.face_embeddings))
    with open(paths["speech_embeddings"], "w", encoding="utf-8") as fh:
        fh.write(write_embedding_matrix(dataset.speech_embeddings))
    lines = ["segment_id,track_id,vas"]
    for (seg_id, trk_id) in sorted(gt_vas):
        lines.append(f"{seg_id},{trk_id},{repr(float(gt_vas[(seg_id, trk_id)]))}")
    with open(paths["associations"], "w", encoding="utf-8") as fh:
        fh.write("".join(line + "\n" for line in lines))
    return paths
