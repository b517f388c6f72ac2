"""Domain data model, file-format parsers/writers, and dataset validation.

An episode is described by four plain-text artifacts:

* an RTTM file with the oracle speaker-homogeneous speech segments,
* a JSON-lines file with the face tracks (per-frame bounding boxes),
* two CSV embedding matrices (face tracks and speech segments).

All values are immutable after construction and every parser is a pure
function, so episodes can be loaded concurrently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

# Slack for floating-point time comparisons; oracle times carry millisecond
# precision so a nanosecond never changes a verdict.
TIME_EPS = 1e-9

NA = "<NA>"


class ParseError(ValueError):
    """Malformed input file; message carries the offending line number."""


def _check_character_id(label: str) -> str:
    if not label or any(ch.isspace() for ch in label):
        raise ValueError(f"character id must be non-empty without whitespace, got {label!r}")
    return label


@dataclass(frozen=True)
class BoundingBox:
    """Face bounding box in normalized image coordinates ([0,1] on both axes)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"box coordinate {name}={v} outside [0,1]")
        if not self.x1 < self.x2:
            raise ValueError(f"x1 < x2 violated: {self.x1} >= {self.x2}")
        if not self.y1 < self.y2:
            raise ValueError(f"y1 < y2 violated: {self.y1} >= {self.y2}")

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))


@dataclass(frozen=True)
class SpeechSegment:
    """An oracle speaker-homogeneous speech interval.

    ``speaker`` is the ground-truth character identity; it is unknown to the
    system at inference time and only used for evaluation and simulation.
    """

    id: str
    recording: str
    start: float
    duration: float
    speaker: str | None = None
    has_embedding: bool = True

    def __post_init__(self):
        if self.start < 0:
            raise ValueError(f"segment {self.id}: negative start {self.start}")
        if self.duration <= 0:
            raise ValueError(f"segment {self.id}: non-positive duration {self.duration}")
        if self.speaker is not None:
            _check_character_id(self.speaker)

    @property
    def end(self) -> float:
        return self.start + self.duration

    def overlap_length(self, start: float, end: float) -> float:
        """Length of the intersection with the interval [start, end]."""
        return min(self.end, end) - max(self.start, start)


@dataclass(frozen=True)
class FaceTrack:
    """A temporal sequence of per-frame face bounding boxes for one face.

    Frame times must be strictly increasing. ``character`` is the
    ground-truth identity, present only for evaluation.
    """

    id: str
    recording: str
    frames: tuple[tuple[float, BoundingBox], ...]
    character: str | None = None
    has_embedding: bool = True

    def __post_init__(self):
        if len(self.frames) < 1:
            raise ValueError(f"track {self.id}: needs at least one frame")
        times = [t for t, _ in self.frames]
        for a, b in zip(times, times[1:]):
            if not a < b:
                raise ValueError(f"track {self.id}: frame times not increasing ({a} -> {b})")
        if self.character is not None:
            _check_character_id(self.character)

    @property
    def start(self) -> float:
        return self.frames[0][0]

    @property
    def end(self) -> float:
        return self.frames[-1][0]

    def box_at(self, t: float) -> BoundingBox:
        """Box of the frame nearest in time to ``t``; ties go to the earlier frame."""
        best = min(self.frames, key=lambda fr: (abs(fr[0] - t), fr[0]))
        return best[1]


class EmbeddingMatrix:
    """Id-indexed fixed-dimension real vectors for faces or speech.

    Rows are stored as given (not normalized); every row must have a
    non-zero Euclidean norm so cosine similarity is always defined.
    """

    def __init__(self, ids: list[str], rows: np.ndarray):
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError("embedding rows must form a 2-D matrix")
        if len(ids) != rows.shape[0]:
            raise ValueError(f"{len(ids)} ids for {rows.shape[0]} rows")
        seen = set()
        for i in ids:
            if i in seen:
                raise ValueError(f"duplicate id {i!r}")
            seen.add(i)
        norms = np.linalg.norm(rows, axis=1)
        for i, n in zip(ids, norms):
            if n == 0.0:
                raise ValueError(f"zero-norm embedding {i}")
        self.ids = list(ids)
        self.rows = rows
        self._index = {v: k for k, v in enumerate(ids)}

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, id_: str) -> bool:
        return id_ in self._index

    def vector(self, id_: str) -> np.ndarray:
        try:
            return self.rows[self._index[id_]]
        except KeyError:
            raise KeyError(f"no embedding row for id {id_!r}") from None

    def unit_vector(self, id_: str) -> np.ndarray:
        v = self.vector(id_)
        return v / np.linalg.norm(v)

    def submatrix(self, ids: list[str]) -> np.ndarray:
        """Rows for the given ids, in the given order."""
        return self.rows[[self._index[i] for i in ids]]


@dataclass(frozen=True)
class EpisodeDataset:
    """One episode: segments, tracks, and the two embedding matrices."""

    recording: str
    segments: tuple[SpeechSegment, ...]
    tracks: tuple[FaceTrack, ...]
    face_embeddings: EmbeddingMatrix
    speech_embeddings: EmbeddingMatrix

    def segment_by_id(self, segment_id: str) -> SpeechSegment:
        for s in self.segments:
            if s.id == segment_id:
                return s
        raise KeyError(f"unknown segment {segment_id!r}")


# ---------------------------------------------------------------------------
# RTTM
# ---------------------------------------------------------------------------

def parse_rttm(text: str) -> list[SpeechSegment]:
    """Parse SPEAKER lines of an RTTM stream into speech segments.

    RTTM has no segment-id field; ids are synthesized as
    ``<recording>_<index>`` with the index assigned in start-time order per
    recording. Lines starting with ``;;`` are comments.
    """
    raw: list[tuple[int, str, float, float, str | None]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(";;"):
            continue
        fields = stripped.split()
        if len(fields) < 9:
            raise ParseError(f"line {lineno}: expected >= 9 fields, got {len(fields)}")
        if fields[0] != "SPEAKER":
            raise ParseError(f"line {lineno}: expected type SPEAKER, got {fields[0]!r}")
        recording = fields[1]
        try:
            start = float(fields[3])
            duration = float(fields[4])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if not math.isfinite(start) or not math.isfinite(duration):
            raise ParseError(f"line {lineno}: non-finite time value")
        if duration <= 0:
            raise ParseError(f"line {lineno}: non-positive duration {duration}")
        if start < 0:
            raise ParseError(f"line {lineno}: negative start {start}")
        speaker = None if fields[7] == NA else fields[7]
        raw.append((lineno, recording, start, duration, speaker))

    raw.sort(key=lambda r: (r[1], r[2], r[0]))
    counters: dict[str, int] = {}
    segments = []
    for lineno, recording, start, duration, speaker in raw:
        idx = counters.get(recording, 0)
        counters[recording] = idx + 1
        try:
            segments.append(
                SpeechSegment(
                    id=f"{recording}_{idx}",
                    recording=recording,
                    start=start,
                    duration=duration,
                    speaker=speaker,
                )
            )
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
    return segments


def write_rttm(segments: list[SpeechSegment], labels=None) -> str:
    """Render segments as RTTM text, sorted by start time.

    With ``labels`` (a DiarizationHypothesis) the speaker field carries the
    hypothesis cluster as ``spk<label>``; unassigned segments get ``<NA>``.
    Without labels the ground-truth speaker is written. Times are fixed to
    3 decimal places, so output round-trips through :func:`parse_rttm` at
    millisecond precision.
    """
    if labels is not None:
        for seg in segments:
            if seg.id not in labels.assignments and seg.id not in labels.unassigned:
                raise ValueError(f"segment {seg.id} missing from hypothesis")
    lines = []
    for seg in sorted(segments, key=lambda s: (s.recording, s.start, s.id)):
        if labels is None:
            name = seg.speaker if seg.speaker is not None else NA
        else:
            lab = labels.assignments.get(seg.id)
            name = f"spk{lab}" if lab is not None else NA
        lines.append(
            f"SPEAKER {seg.recording} 1 {seg.start:.3f} {seg.duration:.3f} "
            f"{NA} {NA} {name} {NA} {NA}"
        )
    return "".join(line + "\n" for line in lines)


# ---------------------------------------------------------------------------
# Face tracks (JSON lines)
# ---------------------------------------------------------------------------

def parse_face_tracks(text: str) -> list[FaceTrack]:
    """Parse one JSON object per line into face tracks.

    Expected object shape::

        {"id": "t1", "recording": "ep17",
         "frames": [{"t": 1.0, "box": [x1, y1, x2, y2]}, ...],
         "character": "ross"}          # optional
    """
    tracks = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: invalid JSON: {exc}") from None
        try:
            frames = []
            for fr in obj["frames"]:
                box = fr["box"]
                if len(box) != 4:
                    raise ValueError(f"box needs 4 coordinates, got {len(box)}")
                frames.append((float(fr["t"]), BoundingBox(*map(float, box))))
            tracks.append(
                FaceTrack(
                    id=str(obj["id"]),
                    recording=str(obj["recording"]),
                    frames=tuple(frames),
                    character=obj.get("character"),
                )
            )
        except KeyError as exc:
            raise ParseError(f"line {lineno}: missing field {exc}") from None
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
    return tracks


def write_face_tracks(tracks: list[FaceTrack]) -> str:
    """Inverse of :func:`parse_face_tracks`; one JSON object per line."""
    lines = []
    for tr in tracks:
        obj: dict = {
            "id": tr.id,
            "recording": tr.recording,
            "frames": [
                {"t": t, "box": [b.x1, b.y1, b.x2, b.y2]} for t, b in tr.frames
            ],
        }
        if tr.character is not None:
            obj["character"] = tr.character
        lines.append(json.dumps(obj, sort_keys=True))
    return "".join(line + "\n" for line in lines)


# ---------------------------------------------------------------------------
# Embedding CSV
# ---------------------------------------------------------------------------

def load_embedding_matrix(text: str) -> EmbeddingMatrix:
    """Load a CSV embedding matrix: first column id, remaining columns reals."""
    ids: list[str] = []
    rows: list[list[float]] = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) < 2:
            raise ParseError(f"line {lineno}: expected id plus values")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(f"ragged row at line {lineno}")
        try:
            rows.append([float(c) for c in cells[1:]])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        ids.append(cells[0])
    if not ids:
        raise ParseError("empty embedding matrix")
    try:
        return EmbeddingMatrix(ids, np.array(rows, dtype=np.float64))
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def write_embedding_matrix(matrix: EmbeddingMatrix) -> str:
    """Inverse of :func:`load_embedding_matrix`. Values use shortest
    round-trip float formatting, so load(write(m)) is bit-exact."""
    lines = []
    for id_, row in zip(matrix.ids, matrix.rows):
        lines.append(",".join([id_] + [repr(float(v)) for v in row]))
    return "".join(line + "\n" for line in lines)


# ---------------------------------------------------------------------------
# Dataset validation
# ---------------------------------------------------------------------------

def validate_dataset(dataset: EpisodeDataset) -> list[str]:
    """Check cross-object invariants; returns one message per violation.

    An empty report means the dataset is consistent. Violations are data,
    not failures: nothing raises.
    """
    report: list[str] = []

    seen_seg: set[str] = set()
    for seg in dataset.segments:
        if seg.id in seen_seg:
            report.append(f"segment {seg.id}: duplicate id")
        seen_seg.add(seg.id)
        if seg.recording != dataset.recording:
            report.append(
                f"segment {seg.id}: recording {seg.recording!r} != dataset {dataset.recording!r}"
            )
        if seg.has_embedding and seg.id not in dataset.speech_embeddings:
            report.append(f"segment {seg.id}: missing speech-embedding row")

    by_start = sorted(dataset.segments, key=lambda s: s.start)
    for a, b in zip(by_start, by_start[1:]):
        if a.end - b.start > TIME_EPS:
            report.append(f"segments {a.id} and {b.id}: oracle segments overlap")

    seen_trk: set[str] = set()
    for trk in dataset.tracks:
        if trk.id in seen_trk:
            report.append(f"track {trk.id}: duplicate id")
        seen_trk.add(trk.id)
        if trk.recording != dataset.recording:
            report.append(
                f"track {trk.id}: recording {trk.recording!r} != dataset {dataset.recording!r}"
            )
        if trk.has_embedding and trk.id not in dataset.face_embeddings:
            report.append(f"track {trk.id}: missing face-embedding row")

    return report
