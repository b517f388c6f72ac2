"""Acceptance gate: every criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one pass/fail
line per criterion.
"""

import json
import os
import time

import numpy as np
import pytest

from avdiar import (DiarizationHypothesis, FeatureStack, GradientStack,
                    SaliencyMap, SimulationSpec, SpeechSegment, SynthSpec,
                    compute_der, dbscan, degrade_asd, estimate_num_speakers,
                    generate_corpus, grad_cam, parse_rttm, roi_pool_vas,
                    run_audio_baseline, run_pipeline, write_rttm)
from avdiar.cluster import DistanceMatrix, SpectralParams
from avdiar.corpus import BoundingBox, FaceTrack
from avdiar.simulate import realized_accuracy, run_simulation
from avdiar.cli import dispatch
from oracles import (block_affinity, dbscan_oracle, der_oracle,
                     euclidean_distance_matrix, same_partition)


def check(criterion: int, description: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[acceptance] criterion {criterion:2d} {status}: {description}{suffix}")
    assert ok, f"criterion {criterion}: {description}{suffix}"


@pytest.fixture(scope="module")
def simulation_rows(acceptance_corpus_c4):
    dataset, _, _ = acceptance_corpus_c4
    spec = SimulationSpec(k_values=(100, 90, 80, 70, 60, 50), runs=5, rng_seed=7)
    return {(r.k, r.mode): r for r in run_simulation(dataset, spec)}


def test_criterion_1_perfect_pipeline_soundness(acceptance_corpus_c4,
                                                acceptance_corpus_c6):
    worst_der, worst_time = 0.0, 0.0
    for dataset, _, gt_vas in (acceptance_corpus_c4, acceptance_corpus_c6):
        assert len(dataset.segments) >= 200
        start = time.perf_counter()
        hyp = run_pipeline(dataset, vas_scores=gt_vas)
        elapsed = time.perf_counter() - start
        der = compute_der(list(dataset.segments), hyp).der
        worst_der = max(worst_der, der)
        worst_time = max(worst_time, elapsed)
    check(1, "perfect pipeline: DER <= 0.05 and runtime < 10 s",
          worst_der <= 0.05 and worst_time < 10.0,
          f"DER {worst_der:.4f}, {worst_time:.2f} s")


def test_criterion_2_all_samples_trend(simulation_rows):
    drop = simulation_rows[(50.0, "all")].der_mean - \
        simulation_rows[(100.0, "all")].der_mean
    check(2, "all-samples mode: der_mean(k=50) - der_mean(k=100) >= 0.2",
          drop >= 0.2, f"delta {drop:.3f}")


def test_criterion_3_correct_samples_stability(simulation_rows):
    means = [simulation_rows[(float(k), "correct")].der_mean
             for k in (100, 90, 80, 70, 60)]
    spread = max(means) - min(means)
    check(3, "correct-samples mode: der_mean spread <= 0.1 for k in 100..60",
          spread <= 0.1, f"spread {spread:.3f}")


def test_criterion_4_face_pipeline_beats_audio_with_noisy_speech():
    spec = SynthSpec(characters=4, segments_per_character=55,
                     min_centroid_distance=0.8, intra_spread=0.05,
                     speech_intra_spread=0.4, background_fraction=0.1,
                     vas_noise=0.0, rng_seed=7)
    dataset, _, _ = generate_corpus(spec)
    audio_der = compute_der(
        list(dataset.segments),
        run_audio_baseline(dataset, SpectralParams(rng_seed=0))).der
    sim = SimulationSpec(k_values=(60,), runs=5, modes=("correct",), rng_seed=0)
    face_der = run_simulation(dataset, sim)[0].der_mean
    check(4, "noisy speech: face pipeline (k=60, correct) beats audio baseline",
          face_der < audio_der, f"face {face_der:.3f} vs audio {audio_der:.3f}")


def test_criterion_5_der_mapping_oracle():
    rng = np.random.default_rng(505)
    failures = 0
    for _ in range(100):
        n_seg = int(rng.integers(3, 16))
        n_spk = int(rng.integers(1, 7))
        n_clu = int(rng.integers(1, 7))
        ref, assignments = [], {}
        t = 0.0
        for i in range(n_seg):
            dur = float(rng.integers(1, 10))  # integer durations: exact sums
            ref.append(SpeechSegment(f"s{i}", "ep", t, dur,
                                     f"spk{rng.integers(n_spk)}"))
            t += dur
            if rng.random() < 0.9:
                assignments[f"s{i}"] = int(rng.integers(n_clu))
        hyp = DiarizationHypothesis(
            assignments, frozenset(s.id for s in ref if s.id not in assignments))
        if compute_der(ref, hyp).der != der_oracle(ref, hyp):
            failures += 1
    check(5, "DER Hungarian mapping equals brute force on 100 instances, exactly",
          failures == 0, f"{failures} mismatches")


def test_criterion_6_dbscan_oracle():
    rng = np.random.default_rng(606)
    failures = 0
    for _ in range(100):
        n = int(rng.integers(2, 51))
        d = euclidean_distance_matrix(rng.normal(size=(n, 2)))
        eps = float(rng.uniform(0.2, 1.5))
        min_pts = int(rng.integers(1, 6))
        got = dbscan(DistanceMatrix([str(i) for i in range(n)], d), eps, min_pts)
        if not same_partition(got.labels, dbscan_oracle(d, eps, min_pts)):
            failures += 1
    check(6, "DBSCAN equals brute-force density reachability on 100 instances",
          failures == 0, f"{failures} mismatches")


def test_criterion_7_eigengap_block_counts():
    rng = np.random.default_rng(707)
    failures = 0
    trials = 0
    for blocks in range(2, 9):
        for _ in range(15):
            sizes = [int(rng.integers(2, 11)) for _ in range(blocks)]
            trials += 1
            if estimate_num_speakers(block_affinity(sizes)) != blocks:
                failures += 1
    check(7, "eigengap estimator exact on block-diagonal affinities, 2-8 blocks",
          failures == 0, f"{failures}/{trials} wrong")


def test_criterion_8_degrade_realized_accuracy():
    spec = SynthSpec(characters=4, segments_per_character=300,
                     background_fraction=0.1, rng_seed=3)
    dataset, gt_pairs, _ = generate_corpus(spec)
    assert len(gt_pairs) >= 1000
    worst = 0.0
    for k in (90, 70, 50):
        accs = []
        for seed in range(5):
            rng = np.random.default_rng(seed)
            result = degrade_asd(gt_pairs, k, rng, list(dataset.segments),
                                 list(dataset.tracks))
            accs.append(realized_accuracy(result, list(dataset.segments)))
        worst = max(worst, abs(float(np.mean(accs)) - k / 100.0))
    check(8, "degrade_asd realized accuracy within 0.02 of k/100 over 5 seeds",
          worst <= 0.02, f"worst deviation {worst:.4f}")


def test_criterion_9_saliency_properties():
    rng = np.random.default_rng(909)
    box = BoundingBox(0.2, 0.2, 0.7, 0.7)
    track = FaceTrack("t", "ep", ((0.0, box), (1.0, box)))
    segment = SpeechSegment("s", "ep", 0.0, 1.0)
    failures = 0
    for _ in range(100):
        shape = (int(rng.integers(1, 4)), int(rng.integers(1, 3)),
                 int(rng.integers(2, 6)), int(rng.integers(2, 6)))
        times = np.sort(rng.uniform(0.0, 1.0, size=shape[1]))
        while len(np.unique(times)) != len(times):
            times = np.sort(rng.uniform(0.0, 1.0, size=shape[1]))
        features = FeatureStack(rng.normal(size=shape), times)
        grads = rng.normal(size=shape)
        scale = float(rng.uniform(0.0, 3.0))
        base = grad_cam(features, GradientStack(grads))
        scaled = grad_cam(features, GradientStack(scale * grads))
        const = float(rng.uniform(0.1, 5.0))
        cams = SaliencyMap(np.full(shape[1:], const), times)
        ok = ((base.grid >= 0).all()
              and np.allclose(scaled.grid, scale * base.grid, atol=1e-12)
              and roi_pool_vas(cams, track, segment) == pytest.approx(const))
        if not ok:
            failures += 1
    check(9, "saliency properties: non-negativity, gradient scaling, constant pooling",
          failures == 0, f"{failures}/100 trials failed")


def test_criterion_10_cli_reproducibility(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"characters": 4, "segments_per_character": 10,
                                "vas_noise": 0.05}))

    croot = tmp_path / "work"
    synth_argv = ["synth", "--spec", str(spec), "--seed", "13",
                  "-o", str(croot / "corpus")]
    diarize_argv = [
        "diarize",
        "--rttm", str(croot / "corpus" / "ref.rttm"),
        "--tracks", str(croot / "corpus" / "tracks.jsonl"),
        "--face-emb", str(croot / "corpus" / "face_embeddings.csv"),
        "--speech-emb", str(croot / "corpus" / "speech_embeddings.csv"),
        "--associations", str(croot / "corpus" / "associations.csv"),
        "--seed", "13", "-o", str(croot / "run")]

    def run_all():
        assert dispatch(synth_argv) == 0
        assert dispatch(diarize_argv) == 0
        out = {}
        for sub in ("corpus", "run"):
            for fname in sorted(os.listdir(croot / sub)):
                with open(croot / sub / fname, "rb") as fh:
                    out[f"{sub}/{fname}"] = fh.read()
        return out

    identical = run_all() == run_all()  # identical argv, rerun end to end

    segments = [
        SpeechSegment("ep_0", "ep", 0.001, 1.034, "a"),
        SpeechSegment("ep_1", "ep", 2.5, 0.123, "b"),
    ]
    round_trip = parse_rttm(write_rttm(segments)) == segments

    check(10, "CLI reruns byte-identical and RTTM round-trip exact at 1 ms",
          identical and round_trip,
          f"identical={identical}, round_trip={round_trip}")
