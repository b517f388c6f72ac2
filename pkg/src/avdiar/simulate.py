"""Simulated ASD-accuracy study.

Ground-truth speech-face pairs are degraded to k% accuracy by selecting
(100-k)% of them and permuting their face tracks so that every selected
segment ends up with a wrong character's face. Diarization then runs in
two modes: "all" clusters every degraded pair, "correct" clusters only
the pairs that survived the shuffle unscathed; either way the remaining
segments are swept in by residual assignment and scored with DER.

Selection is count-based; realized accuracy is reported duration-weighted
so the difference stays visible. Runs are reproducible: each (k, run)
cell derives its own generator from the spec seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .asd import Association
from .corpus import EpisodeDataset, FaceTrack, SpeechSegment
from .diarize import PipelineConfig, diarize_selected
from .evaluation import compute_der

log = logging.getLogger(__name__)

MODES = ("all", "correct")
SHUFFLE_RETRY_CAP = 200


@dataclass(frozen=True)
class SimulationSpec:
    """Grid of simulated ASD accuracies to evaluate."""

    k_values: tuple[float, ...] = (100, 90, 80, 70, 60, 50)
    runs: int = 5
    modes: tuple[str, ...] = MODES
    rng_seed: int = 0
    pipeline: PipelineConfig = PipelineConfig()

    def __post_init__(self):
        object.__setattr__(self, "k_values", tuple(float(k) for k in self.k_values))
        object.__setattr__(self, "modes", tuple(self.modes))
        for k in self.k_values:
            if not 0.0 < k <= 100.0:
                raise ValueError(f"k must lie in (0,100], got {k}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown mode {m!r}")


@dataclass
class DegradeResult:
    """Shuffled associations plus which of them are still correct."""

    associations: dict[str, str]
    correct_mask: dict[str, bool]
    skipped: bool = False


@dataclass
class SimulationRow:
    """Per-(k, mode) DER outcomes across runs."""

    k: float
    mode: str
    der_values: list[float]
    realized_accuracies: list[float]

    @property
    def der_mean(self) -> float:
        return float(np.mean(self.der_values))

    @property
    def realized_accuracy_mean(self) -> float:
        return float(np.mean(self.realized_accuracies))


def degrade_asd(gt_associations: dict[str, str], k: float,
                rng: np.random.Generator,
                segments: list[SpeechSegment],
                tracks: list[FaceTrack]) -> DegradeResult:
    """Degrade ground-truth associations to roughly k% accuracy.

    Selects (100-k)% of the pairs (count-based) and permutes their tracks,
    rejecting permutations that hand any selected segment a face of its
    own character; after the retry cap the sampled permutation with the
    fewest such give-backs is kept. k=100 is the identity.
    """
    speaker = {s.id: s.speaker for s in segments}
    character = {t.id: t.character for t in tracks}
    seg_ids = sorted(gt_associations)
    n_select = int(round(len(seg_ids) * (100.0 - k) / 100.0))

    associations = dict(gt_associations)
    skipped = False
    if n_select == 1:
        log.warning("degrade skipped: cannot shuffle a single association")
        skipped = True
    elif n_select > 1:
        selected = [seg_ids[i] for i in sorted(rng.choice(len(seg_ids), size=n_select,
                                                          replace=False))]
        pool = [gt_associations[s] for s in selected]
        perm = _mismatching_permutation(
            [speaker[s] for s in selected], [character[t] for t in pool], rng)
        for i, s in enumerate(selected):
            associations[s] = pool[perm[i]]

    correct_mask = {
        s: character[t] == speaker[s] for s, t in associations.items()
    }
    return DegradeResult(associations, correct_mask, skipped)


def _mismatching_permutation(speakers: list, characters: list,
                             rng: np.random.Generator) -> list[int]:
    """A random permutation avoiding fixed characters wherever possible.

    Start from a uniform draw, then repair collisions (position i holding
    its own character) by swaps that fix i without breaking the partner.
    Each swap strictly reduces the collision count, so the sweep loop
    terminates; leftovers are only possible when one character owns more
    than half the selection, and are logged.
    """
    n = len(speakers)
    perm = list(rng.permutation(n))

    def collides(i: int) -> bool:
        return characters[perm[i]] == speakers[i]

    for _ in range(SHUFFLE_RETRY_CAP):
        bad = [i for i in range(n) if collides(i)]
        if not bad:
            break
        progressed = False
        for i in bad:
            if not collides(i):
                continue
            for j in range(n):
                if j == i:
                    continue
                if characters[perm[j]] != speakers[i] and \
                        characters[perm[i]] != speakers[j]:
                    perm[i], perm[j] = perm[j], perm[i]
                    progressed = True
                    break
        if not progressed:
            break
    leftover = sum(1 for i in range(n) if collides(i))
    if leftover:
        log.warning("shuffle left %d selected pairs on their own character", leftover)
    return perm


def realized_accuracy(result: DegradeResult, segments: list[SpeechSegment]) -> float:
    """Duration-weighted share of still-correct associations."""
    dur = {s.id: s.duration for s in segments}
    total = sum(dur[s] for s in result.associations)
    if total == 0.0:
        return 0.0
    good = sum(dur[s] for s, ok in result.correct_mask.items() if ok)
    return good / total


def ground_truth_pairs(dataset: EpisodeDataset) -> dict[str, str]:
    """True segment-to-track pairing recovered from identities."""
    from .asd import candidate_tracks

    character = {t.id: t.character for t in dataset.tracks}
    candidates = candidate_tracks(list(dataset.segments), list(dataset.tracks))
    pairs: dict[str, str] = {}
    for seg in dataset.segments:
        if seg.speaker is None:
            raise ValueError(f"segment {seg.id}: simulation needs ground truth")
        matching = [t for t in candidates[seg.id] if character[t] == seg.speaker]
        if matching:
            pairs[seg.id] = matching[0]
    return pairs


def run_simulation(dataset: EpisodeDataset, spec: SimulationSpec) -> list[SimulationRow]:
    """Evaluate diarization across the simulated accuracy grid.

    Rows are ordered by (k as given, mode as given); each (k, run) cell
    shares one degraded association set between the two modes, as the
    study prescribes.
    """
    gt_pairs = ground_truth_pairs(dataset)
    if not gt_pairs:
        raise ValueError("no ground-truth associations to degrade")
    reference = [s for s in dataset.segments]

    rows = [SimulationRow(k, mode, [], []) for k in spec.k_values for mode in spec.modes]
    by_key = {(r.k, r.mode): r for r in rows}
    for k in spec.k_values:
        for run in range(spec.runs):
            rng = np.random.default_rng(np.random.SeedSequence(
                entropy=spec.rng_seed, spawn_key=(int(k * 1000), run)))
            degraded = degrade_asd(gt_pairs, k, rng, list(dataset.segments),
                                   list(dataset.tracks))
            acc = realized_accuracy(degraded, list(dataset.segments))
            for mode in spec.modes:
                if mode == "all":
                    kept = sorted(degraded.associations.items())
                else:
                    kept = sorted(
                        (s, t) for s, t in degraded.associations.items()
                        if degraded.correct_mask[s]
                    )
                selected = [Association(s, t, vas=1.0) for s, t in kept]
                report = diarize_selected(selected, dataset,
                                          eps=spec.pipeline.eps,
                                          min_pts=spec.pipeline.min_pts)
                der = compute_der(reference, report.hypothesis).der
                row = by_key[(k, mode)]
                row.der_values.append(der)
                row.realized_accuracies.append(acc)
                log.debug("k=%g run=%d mode=%s der=%.4f acc=%.4f", k, run, mode, der, acc)
    return rows


def simulation_runs_csv(rows: list[SimulationRow]) -> str:
    """Per-run table: k,mode,run,der,realized_accuracy."""
    lines = ["k,mode,run,der,realized_accuracy"]
    for row in rows:
        for run, (der, acc) in enumerate(zip(row.der_values, row.realized_accuracies)):
            lines.append(f"{row.k:g},{row.mode},{run},{repr(der)},{repr(acc)}")
    return "".join(line + "\n" for line in lines)


def simulation_means_csv(rows: list[SimulationRow]) -> str:
    """Summary table: k,mode,der_mean,realized_accuracy_mean."""
    lines = ["k,mode,der_mean,realized_accuracy_mean"]
    for row in rows:
        lines.append(f"{row.k:g},{row.mode},{repr(row.der_mean)},"
                     f"{repr(row.realized_accuracy_mean)}")
    return "".join(line + "\n" for line in lines)
