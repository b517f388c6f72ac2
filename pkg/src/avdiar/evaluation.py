"""Diarization error rate and distance-matrix exports.

DER is computed under oracle segmentation: hypothesis labels attach to
the reference segments themselves, so false alarm is structurally zero
and the error is confusion (wrongly mapped speech) plus missed speech
(unassigned segments), over the total reference duration. The
cluster-to-speaker mapping is the optimal one-to-one assignment by
agreement duration, solved with the Hungarian method.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .asd import Association
from .cluster import DistanceMatrix, cosine_distance_matrix
from .corpus import EmbeddingMatrix, SpeechSegment
from .diarize import DiarizationHypothesis


@dataclass(frozen=True)
class DERReport:
    """DER components in seconds plus the optimal cluster-speaker mapping."""

    total_ref: float
    missed: float
    false_alarm: float
    confusion: float
    der: float
    mapping: dict[int, str]

    def to_json(self) -> str:
        payload = {
            "total_ref_seconds": self.total_ref,
            "missed_seconds": self.missed,
            "false_alarm_seconds": self.false_alarm,
            "confusion_seconds": self.confusion,
            "der": self.der,
            "mapping": {str(k): v for k, v in sorted(self.mapping.items())},
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def compute_der(reference: list[SpeechSegment],
                hypothesis: DiarizationHypothesis,
                collar: float = 0.0,
                ignore_overlap: bool = False) -> DERReport:
    """Score a hypothesis against reference segments with known speakers.

    Every reference segment must carry a speaker. Hypothesis entries for
    unknown segments are an error; reference segments absent from the
    hypothesis count as missed, like explicitly unassigned ones. Surplus
    clusters stay unmapped and their whole duration counts as confusion.

    ``collar`` and ``ignore_overlap`` exist for interface compatibility
    with boundary-detecting scorers; with oracle segmentation (labels
    attach to whole reference segments, which never overlap) both are
    inert.
    """
    del collar, ignore_overlap
    if not reference:
        raise ValueError("empty reference")
    seg_by_id = {}
    for seg in reference:
        if seg.speaker is None:
            raise ValueError(f"reference segment {seg.id} has no speaker")
        if seg.id in seg_by_id:
            raise ValueError(f"duplicate reference segment {seg.id}")
        seg_by_id[seg.id] = seg
    for seg_id in list(hypothesis.assignments) + list(hypothesis.unassigned):
        if seg_id not in seg_by_id:
            raise ValueError(f"hypothesis references unknown segment {seg_id!r}")

    speakers = sorted({seg.speaker for seg in reference})
    clusters = sorted(set(hypothesis.assignments.values()))
    spk_index = {s: i for i, s in enumerate(speakers)}
    clu_index = {c: i for i, c in enumerate(clusters)}

    # Agreement duration between every cluster and every speaker.
    weight = np.zeros((len(clusters), len(speakers)))
    for seg_id, label in hypothesis.assignments.items():
        seg = seg_by_id[seg_id]
        weight[clu_index[label], spk_index[seg.speaker]] += seg.duration

    mapping: dict[int, str] = {}
    if clusters:
        rows, cols = linear_sum_assignment(weight, maximize=True)
        mapping = {clusters[r]: speakers[c] for r, c in zip(rows, cols)}

    total_ref = sum(seg.duration for seg in reference)
    missed = sum(
        seg.duration for seg in reference if seg.id not in hypothesis.assignments
    )
    confusion = 0.0
    for seg_id, label in hypothesis.assignments.items():
        seg = seg_by_id[seg_id]
        if mapping.get(label) != seg.speaker:
            confusion += seg.duration

    false_alarm = 0.0  # oracle segmentation: hypothesis never exceeds reference speech
    der = (missed + false_alarm + confusion) / total_ref
    return DERReport(total_ref, missed, false_alarm, confusion, der, mapping)


# ---------------------------------------------------------------------------
# Distance-matrix figures
# ---------------------------------------------------------------------------

def association_distance_matrix(selected: list[Association],
                                face_embeddings: EmbeddingMatrix,
                                segments: list[SpeechSegment] | None = None
                                ) -> DistanceMatrix:
    """Pairwise face cosine distances between selected associations.

    One row per association, identified by its segment id; the distance
    between two rows is the cosine distance of their tracks' face
    embeddings. With ``segments`` supplying ground-truth speakers, rows
    are grouped by character (name, then segment start); otherwise input
    order is kept.
    """
    ordered = list(selected)
    if segments is not None:
        seg_by_id = {s.id: s for s in segments}
        def key(a: Association):
            seg = seg_by_id[a.segment_id]
            speaker = seg.speaker if seg.speaker is not None else "~unlabelled"
            return (speaker, seg.start, seg.id)
        ordered = sorted(selected, key=key)
    ids = [a.segment_id for a in ordered]
    rows = np.stack([face_embeddings.vector(a.track_id) for a in ordered])
    return cosine_distance_matrix(ids, rows)


def distance_matrix_to_pgm(matrix: DistanceMatrix) -> bytes:
    """Render distances as a binary PGM image, 0 (black) to 2 (white)."""
    n = len(matrix)
    header = f"P5\n{n} {n}\n255\n".encode("ascii")
    scaled = np.round(255.0 * np.clip(matrix.values, 0.0, 2.0) / 2.0)
    return header + scaled.astype(np.uint8).tobytes()


def export_distance_matrix(selected: list[Association],
                           face_embeddings: EmbeddingMatrix,
                           segments: list[SpeechSegment] | None,
                           csv_path: str, pgm_path: str) -> DistanceMatrix:
    """Write the association distance matrix as CSV and PGM files."""
    matrix = association_distance_matrix(selected, face_embeddings, segments)
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(matrix.to_csv())
    with open(pgm_path, "wb") as fh:
        fh.write(distance_matrix_to_pgm(matrix))
    return matrix
