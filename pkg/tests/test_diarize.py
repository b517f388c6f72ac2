import numpy as np
import pytest

from avdiar import (Association, DiarizationHypothesis, EmbeddingMatrix,
                    EpisodeDataset, FilterConfig, PipelineConfig, SpectralParams,
                    assign_residual, face_cluster_diarize, filter_associations,
                    run_audio_baseline, run_pipeline, run_pipeline_detailed)
from avdiar.corpus import BoundingBox, FaceTrack, SpeechSegment


def _assoc(seg, trk, combined):
    return Association(seg, trk, vas=combined)


class TestFilterAssociations:
    BEST = {"a": "t", "b": "t", "c": "t", "d": "t"}
    ASSOC = [_assoc("a", "t", 0.9), _assoc("b", "t", 0.8),
             _assoc("c", "t", 0.2), _assoc("d", "t", 0.1)]

    def test_top_half_keeps_best_two(self):
        kept = filter_associations(self.ASSOC, self.BEST, FilterConfig("top", 0.5))
        assert {a.segment_id for a in kept} == {"a", "b"}

    def test_absolute_threshold(self):
        kept = filter_associations(self.ASSOC, self.BEST, FilterConfig("absolute", 0.5))
        assert {a.segment_id for a in kept} == {"a", "b"}

    def test_top_all_is_identity(self):
        kept = filter_associations(self.ASSOC, self.BEST, FilterConfig("top", 1.0))
        assert {a.segment_id for a in kept} == {"a", "b", "c", "d"}

    def test_top_fraction_equals_absolute_minus_inf(self):
        top = filter_associations(self.ASSOC, self.BEST, FilterConfig("top", 1.0))
        absolute = filter_associations(self.ASSOC, self.BEST,
                                       FilterConfig("absolute", -np.inf))
        assert {a.pair for a in top} == {a.pair for a in absolute}

    def test_ties_at_cut_resolved_by_segment_id(self):
        assoc = [_assoc("b", "t", 0.5), _assoc("a", "t", 0.5), _assoc("c", "t", 0.5)]
        best = {"a": "t", "b": "t", "c": "t"}
        kept = filter_associations(assoc, best, FilterConfig("top", 0.3))
        assert [a.segment_id for a in kept] == ["a"]  # ceil(0.3 * 3) = 1

    def test_ceil_rounding(self):
        kept = filter_associations(self.ASSOC, self.BEST, FilterConfig("top", 0.6))
        assert len(kept) == 3  # ceil(0.6 * 4)


def _clustering_dataset():
    """Six segments over two characters, separable faces, plus one isolate."""
    box = BoundingBox(0.1, 0.1, 0.4, 0.4)
    segments, tracks = [], []
    for i in range(6):
        segments.append(SpeechSegment(f"s{i}", "ep", 2.0 * i, 1.5, speaker="x" if i < 3 else "y"))
        tracks.append(FaceTrack(f"t{i}", "ep",
                                ((2.0 * i + 0.1, box), (2.0 * i + 1.4, box)),
                                character="x" if i < 3 else "y"))
    face_rows = np.array([
        [1.0, 0.0, 0.0], [0.99, 0.1, 0.0], [0.98, -0.1, 0.0],
        [0.0, 1.0, 0.0], [0.1, 0.99, 0.0], [-0.1, 0.98, 0.0],
    ])
    speech_rows = np.array([
        [1.0, 0.0], [1.0, 0.05], [1.0, -0.05],
        [0.0, 1.0], [0.05, 1.0], [-0.05, 1.0],
    ])
    face = EmbeddingMatrix([t.id for t in tracks], face_rows)
    speech = EmbeddingMatrix([s.id for s in segments], speech_rows)
    return EpisodeDataset("ep", tuple(segments), tuple(tracks), face, speech)


class TestFaceClusterDiarize:
    def test_two_characters_partition(self):
        ds = _clustering_dataset()
        selected = [_assoc(f"s{i}", f"t{i}", 1.0) for i in range(6)]
        labels, speech_clusters, noisy = face_cluster_diarize(selected, ds, 0.35, 2)
        assert labels.num_clusters == 2
        assert speech_clusters[0] == {"s0", "s1", "s2"}
        assert speech_clusters[1] == {"s3", "s4", "s5"}
        assert noisy == set()

    def test_identical_embeddings_single_cluster(self):
        ds = _clustering_dataset()
        ones = EmbeddingMatrix(ds.face_embeddings.ids,
                               np.tile([1.0, 0.0, 0.0], (6, 1)))
        ds = EpisodeDataset(ds.recording, ds.segments, ds.tracks, ones,
                            ds.speech_embeddings)
        selected = [_assoc(f"s{i}", f"t{i}", 1.0) for i in range(6)]
        labels, speech_clusters, noisy = face_cluster_diarize(selected, ds, 0.35, 2)
        assert labels.num_clusters == 1
        assert speech_clusters[0] == {f"s{i}" for i in range(6)}

    def test_isolated_track_goes_noisy(self):
        ds = _clustering_dataset()
        rows = ds.face_embeddings.rows.copy()
        rows[5] = [0.0, 0.0, 1.0]  # far from everything
        ds = EpisodeDataset(ds.recording, ds.segments, ds.tracks,
                            EmbeddingMatrix(ds.face_embeddings.ids, rows),
                            ds.speech_embeddings)
        selected = [_assoc(f"s{i}", f"t{i}", 1.0) for i in range(6)]
        labels, speech_clusters, noisy = face_cluster_diarize(selected, ds, 0.35, 2)
        assert noisy == {"s5"}
        assert all("s5" not in members for members in speech_clusters.values())

    def test_empty_selection_rejected(self):
        with pytest.raises(ValueError, match="no associations to cluster"):
            face_cluster_diarize([], _clustering_dataset(), 0.35, 2)


class TestAssignResidual:
    def test_zero_distance_cluster_wins(self):
        ds = _clustering_dataset()
        clusters = {0: {"s0", "s1"}, 1: {"s3", "s4"}}
        out = assign_residual(["s2", "s5"], clusters, ds)
        assert out == {"s2": 0, "s5": 1}

    def test_tie_goes_to_lowest_cluster(self):
        segments = (SpeechSegment("q", "ep", 0.0, 1.0),
                    SpeechSegment("m0", "ep", 2.0, 1.0),
                    SpeechSegment("m1", "ep", 4.0, 1.0))
        speech = EmbeddingMatrix(["q", "m0", "m1"],
                                 np.array([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]))
        ds = EpisodeDataset("ep", segments, (),
                            EmbeddingMatrix(["t"], np.array([[1.0]])), speech)
        out = assign_residual(["q"], {0: {"m0"}, 1: {"m1"}}, ds)
        assert out == {"q": 0}

    def test_average_distance_bruteforce(self, rng):
        """Argmin over explicit per-member cosine distance tables."""
        n_members, dim = 5, 6
        ids = [f"m{i}" for i in range(2 * n_members)] + ["q"]
        rows = rng.normal(size=(2 * n_members + 1, dim))
        speech = EmbeddingMatrix(ids, rows)
        segments = tuple(SpeechSegment(i, "ep", 2.0 * k, 1.0)
                         for k, i in enumerate(ids))
        ds = EpisodeDataset("ep", segments, (),
                            EmbeddingMatrix(["t"], np.array([[1.0]])), speech)
        clusters = {0: set(ids[:n_members]), 1: set(ids[n_members:2 * n_members])}
        got = assign_residual(["q"], clusters, ds)["q"]

        def avg(cluster):
            q = rows[-1] / np.linalg.norm(rows[-1])
            total = 0.0
            for m in sorted(cluster):
                v = speech.vector(m)
                total += 1.0 - float(q @ (v / np.linalg.norm(v)))
            return total / len(cluster)

        want = min((0, 1), key=lambda c: avg(clusters[c]))
        assert got == want

    def test_no_clusters_rejected(self):
        with pytest.raises(ValueError, match="no clusters"):
            assign_residual(["q"], {}, _clustering_dataset())


class TestRunPipeline:
    def test_perfect_corpus_recovers_ground_truth(self, small_corpus):
        dataset, gt_pairs, gt_vas = small_corpus
        hyp = run_pipeline(dataset, vas_scores=gt_vas)
        assert hyp.covers([s.id for s in dataset.segments])
        assert hyp.unassigned == frozenset()
        # label-renaming equivalence against the generator's characters
        speaker_of = {s.id: s.speaker for s in dataset.segments}
        mapping = {}
        for seg_id, label in hyp.assignments.items():
            assert mapping.setdefault(label, speaker_of[seg_id]) == speaker_of[seg_id]
        assert len(mapping) == 4

    def test_all_background_rejected(self):
        segments = tuple(SpeechSegment(f"s{i}", "ep", 2.0 * i, 1.0, "x")
                         for i in range(3))
        speech = EmbeddingMatrix([s.id for s in segments], np.eye(3))
        ds = EpisodeDataset("ep", segments, (),
                            EmbeddingMatrix(["t"], np.array([[1.0]])), speech)
        with pytest.raises(ValueError, match="no associations to cluster"):
            run_pipeline(ds, vas_scores={})

    def test_deterministic(self, small_corpus):
        dataset, _, gt_vas = small_corpus
        a = run_pipeline(dataset, vas_scores=gt_vas)
        b = run_pipeline(dataset, vas_scores=gt_vas)
        assert a.assignments == b.assignments

    def test_report_counts_consistent(self, small_corpus):
        dataset, gt_pairs, gt_vas = small_corpus
        report = run_pipeline_detailed(dataset, vas_scores=gt_vas)
        n = len(dataset.segments)
        assert report.clustered_segments + report.residual_segments == n
        assert report.background_segments == n - len(gt_pairs)
        assert report.num_clusters == 4

    def test_vas_only_mode(self, small_corpus):
        dataset, gt_pairs, gt_vas = small_corpus
        config = PipelineConfig(score_mode="vas")
        hyp = run_pipeline(dataset, vas_scores=gt_vas, config=config)
        assert hyp.covers([s.id for s in dataset.segments])

    def test_requires_exactly_one_input(self, small_corpus):
        dataset, _, gt_vas = small_corpus
        with pytest.raises(ValueError, match="exactly one"):
            run_pipeline(dataset)
        with pytest.raises(ValueError, match="exactly one"):
            run_pipeline(dataset, vas_scores=gt_vas, associations=[])

    def test_face_clustering_immune_to_speech_noise(self):
        """With separable faces and perfect associations, speech-embedding
        noise cannot hurt: every segment is clustered through its face."""
        from avdiar import SynthSpec, compute_der, generate_corpus
        spec = SynthSpec(characters=4, segments_per_character=30,
                         intra_spread=0.05, speech_intra_spread=0.8,
                         background_fraction=0.0, vas_noise=0.0, rng_seed=19)
        dataset, _, gt_vas = generate_corpus(spec)
        hyp = run_pipeline(dataset, vas_scores=gt_vas)
        assert compute_der(list(dataset.segments), hyp).der == 0.0


class TestRunAudioBaseline:
    def test_two_blobs_recovered(self):
        ds = _clustering_dataset()
        hyp = run_audio_baseline(ds, SpectralParams(rng_seed=3))
        assert hyp.num_clusters == 2
        assert hyp.unassigned == frozenset()
        labels = {hyp.assignments[f"s{i}"] for i in range(3)}
        assert len(labels) == 1
        assert hyp.assignments["s0"] != hyp.assignments["s3"]

    def test_identical_embeddings_single_cluster(self):
        segments = tuple(SpeechSegment(f"s{i}", "ep", 2.0 * i, 1.0) for i in range(4))
        speech = EmbeddingMatrix([s.id for s in segments],
                                 np.tile([0.6, 0.8], (4, 1)))
        ds = EpisodeDataset("ep", segments, (),
                            EmbeddingMatrix(["t"], np.array([[1.0]])), speech)
        hyp = run_audio_baseline(ds)
        assert hyp.num_clusters == 1

    def test_too_few_segments_rejected(self):
        segments = (SpeechSegment("s0", "ep", 0.0, 1.0),)
        speech = EmbeddingMatrix(["s0"], np.array([[1.0, 0.0]]))
        ds = EpisodeDataset("ep", segments, (),
                            EmbeddingMatrix(["t"], np.array([[1.0]])), speech)
        with pytest.raises(ValueError, match="at least 2"):
            run_audio_baseline(ds)

    def test_separable_synthetic_corpus(self, small_corpus):
        dataset, _, _ = small_corpus
        hyp = run_audio_baseline(dataset)
        speaker_of = {s.id: s.speaker for s in dataset.segments}
        mapping = {}
        clean = 0
        for seg_id, label in hyp.assignments.items():
            if mapping.setdefault(label, speaker_of[seg_id]) == speaker_of[seg_id]:
                clean += 1
        assert hyp.num_clusters == 4
        assert clean / len(hyp.assignments) > 0.95


class TestDiarizationHypothesis:
    def test_partition_enforced(self):
        with pytest.raises(ValueError, match="both assigned and unassigned"):
            DiarizationHypothesis({"a": 0}, frozenset({"a"}))

    def test_cluster_sizes(self):
        hyp = DiarizationHypothesis({"a": 0, "b": 0, "c": 1})
        assert hyp.cluster_sizes() == {0: 2, 1: 1}
        assert hyp.num_clusters == 2
