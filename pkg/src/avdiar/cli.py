"""Command-line entry point for batch experiments.

Subcommands: synth, validate, asd, diarize, baseline, score, distmat,
simulate. Every run writes its outputs plus a manifest.json (effective
config, seed, input paths, file-format versions) under the output
directory, so a run can be reproduced from its manifest alone. Logs go
to stderr (level from the AVD_LOG environment variable); data only ever
goes to files.

Exit codes: 0 success, 1 validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import asd as asd_mod
from . import saliency, simulate, synth
from .cluster import SpectralParams
from .corpus import (EmbeddingMatrix, EpisodeDataset, ParseError,
                     load_embedding_matrix, parse_face_tracks, parse_rttm,
                     validate_dataset, write_rttm)
from .diarize import (DiarizationHypothesis, FilterConfig, PipelineConfig,
                      filter_associations, run_audio_baseline,
                      run_pipeline_detailed)
from .evaluation import compute_der, export_distance_matrix

log = logging.getLogger(__name__)

FORMAT_VERSIONS = {
    "rttm": 1,
    "tracks_jsonl": 1,
    "embeddings_csv": 1,
    "associations_csv": 1,
    "distance_matrix_csv": 1,
    "pgm": 5,
}

PROG = "avdiar"


class UsageError(Exception):
    """Bad invocation (unknown key, missing input file); exits with 2."""


def _setup_logging():
    level = os.environ.get("AVD_LOG", "WARNING").upper()
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _read_text(path: str, flag: str) -> str:
    if not os.path.isfile(path):
        raise UsageError(f"{flag}: file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _load_json(path: str, flag: str) -> dict:
    text = _read_text(path, flag)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{flag}: invalid JSON in {path}: {exc}") from None


def _merge_options(args: argparse.Namespace, defaults: dict) -> dict:
    """Effective options: explicit flags win, then --config, then defaults."""
    cfg = {}
    if getattr(args, "config", None):
        cfg = _load_json(args.config, "--config")
        unknown = sorted(set(cfg) - set(defaults))
        if unknown:
            raise UsageError(f"--config: unknown keys {unknown}")
    merged = {}
    for key, default in defaults.items():
        explicit = getattr(args, key, None)
        if explicit is not None:
            merged[key] = explicit
        elif key in cfg:
            merged[key] = cfg[key]
        else:
            merged[key] = default
    return merged


def _write_manifest(outdir: str, subcommand: str, seed, options: dict,
                    inputs: dict, outputs: list[str]):
    manifest = {
        "subcommand": subcommand,
        "seed": seed,
        "config": options,
        "inputs": inputs,
        "outputs": sorted(outputs),
        "format_versions": FORMAT_VERSIONS,
    }
    with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_file(outdir: str, name: str, content) -> str:
    path = os.path.join(outdir, name)
    if isinstance(content, bytes):
        with open(path, "wb") as fh:
            fh.write(content)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(content)
    return name


def _load_dataset(args) -> EpisodeDataset:
    segments = parse_rttm(_read_text(args.rttm, "--rttm"))
    tracks = parse_face_tracks(_read_text(args.tracks, "--tracks"))
    face_emb = load_embedding_matrix(_read_text(args.face_emb, "--face-emb"))
    speech_emb = load_embedding_matrix(_read_text(args.speech_emb, "--speech-emb"))
    recordings = sorted({s.recording for s in segments} | {t.recording for t in tracks})
    if len(recordings) != 1:
        raise ValueError(f"expected exactly one recording, found {recordings}")
    return EpisodeDataset(
        recording=recordings[0],
        segments=tuple(segments),
        tracks=tuple(tracks),
        face_embeddings=face_emb,
        speech_embeddings=speech_emb,
    )


def _input_paths(args, flags: list[str]) -> dict:
    return {flag: getattr(args, flag.lstrip("-").replace("-", "_")) for flag in flags}


def _associations_have_pms(path: str) -> bool:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    return len(header) > 3 and header[3] == "pms"


def _vas_from_cams(cams_dir: str, dataset: EpisodeDataset,
                   candidates: dict[str, list[str]]) -> dict:
    """ROI-pool per-segment CAM bundles into raw VAS scores."""
    track_by_id = {t.id: t for t in dataset.tracks}
    seg_by_id = {s.id: s for s in dataset.segments}
    scores = {}
    for seg_id, track_ids in sorted(candidates.items()):
        if not track_ids:
            continue
        seg_dir = os.path.join(cams_dir, seg_id)
        if not os.path.isdir(seg_dir):
            raise ValueError(f"no CAM bundle for segment {seg_id} under {cams_dir}")
        cams = saliency.load_segment_cams(seg_dir)
        for t in track_ids:
            scores[(seg_id, t)] = saliency.roi_pool_vas(
                cams, track_by_id[t], seg_by_id[seg_id])
    return scores


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

SYNTH_DEFAULTS = {
    "characters": 4, "segments_per_character": 25, "face_dim": 64,
    "speech_dim": 32, "intra_spread": 0.05, "speech_intra_spread": None,
    "min_centroid_distance": 0.8, "background_fraction": 0.1, "vas_noise": 0.0,
}


def cmd_synth(args) -> int:
    options = dict(SYNTH_DEFAULTS)
    if args.spec:
        spec_json = _load_json(args.spec, "--spec")
        unknown = sorted(set(spec_json) - set(options))
        if unknown:
            raise UsageError(f"--spec: unknown keys {unknown}")
        options.update(spec_json)
    spec = synth.SynthSpec(rng_seed=args.seed, **options)
    dataset, _, gt_vas = synth.generate_corpus(spec)
    paths = synth.write_corpus(args.output_dir, dataset, gt_vas)
    _write_manifest(args.output_dir, "synth", args.seed, options,
                    {"--spec": args.spec}, [os.path.basename(p) for p in paths.values()])
    log.info("wrote synthetic corpus with %d segments to %s",
             len(dataset.segments), args.output_dir)
    return 0


def cmd_validate(args) -> int:
    dataset = _load_dataset(args)
    report = validate_dataset(dataset)
    _write_file(args.output_dir, "validation_report.json",
                json.dumps({"violations": report}, indent=2, sort_keys=True) + "\n")
    _write_manifest(args.output_dir, "validate", None, {},
                    _input_paths(args, ["--rttm", "--tracks", "--face-emb", "--speech-emb"]),
                    ["validation_report.json"])
    for line in report:
        log.error("violation: %s", line)
    return 1 if report else 0


ASD_DEFAULTS = {
    "seed_percentile": 0.8, "add_threshold": 1.0, "max_iterations": 10,
    "eps": 0.35, "min_pts": 3,
}


def cmd_asd(args) -> int:
    if (args.associations is None) == (args.cams is None):
        raise UsageError("provide exactly one of --associations or --cams")
    options = _merge_options(args, ASD_DEFAULTS)
    dataset = _load_dataset(args)
    candidates = asd_mod.candidate_tracks(list(dataset.segments), list(dataset.tracks))
    if args.associations:
        raw = asd_mod.associations_from_csv(
            _read_text(args.associations, "--associations"))
        vas_scores = {a.pair: a.vas for a in raw}
    else:
        vas_scores = _vas_from_cams(args.cams, dataset, candidates)
    config = asd_mod.HciConfig(
        seed_percentile=options["seed_percentile"],
        add_threshold=options["add_threshold"],
        max_iterations=options["max_iterations"],
        dbscan_eps=options["eps"],
        dbscan_min_pts=options["min_pts"],
    )
    scored = asd_mod.iterate_profile_matching(dataset, candidates, vas_scores, config)
    outputs = [_write_file(args.output_dir, "scored_associations.csv",
                           asd_mod.associations_to_csv(scored))]

    have_truth = all(s.speaker for s in dataset.segments) and \
        all(t.character for t in dataset.tracks)
    if have_truth:
        stats = {}
        for mode in ("vas", "combined"):
            best = asd_mod.select_active_faces(scored, candidates, mode)
            stats[f"accuracy_{mode}"] = asd_mod.asd_accuracy(
                best, list(dataset.segments), list(dataset.tracks))
        outputs.append(_write_file(
            args.output_dir, "asd_report.json",
            json.dumps(stats, indent=2, sort_keys=True) + "\n"))
        log.info("ASD accuracy: vas=%.4f combined=%.4f",
                 stats["accuracy_vas"], stats["accuracy_combined"])

    _write_manifest(args.output_dir, "asd", None, options,
                    _input_paths(args, ["--rttm", "--tracks", "--face-emb",
                                        "--speech-emb"]) |
                    {"--associations": args.associations, "--cams": args.cams},
                    outputs)
    return 0


DIARIZE_DEFAULTS = {
    "score_mode": "combined", "filter_mode": "top", "filter_value": 1.0,
    "eps": 0.35, "min_pts": 3,
    "seed_percentile": 0.8, "add_threshold": 1.0, "max_iterations": 10,
}


def _pipeline_config(options: dict, seed: int) -> PipelineConfig:
    return PipelineConfig(
        filter=FilterConfig(options["filter_mode"], options["filter_value"]),
        eps=options["eps"],
        min_pts=options["min_pts"],
        score_mode=options["score_mode"],
        hci=asd_mod.HciConfig(
            seed_percentile=options["seed_percentile"],
            add_threshold=options["add_threshold"],
            max_iterations=options["max_iterations"],
            dbscan_eps=options["eps"],
            dbscan_min_pts=options["min_pts"],
        ),
        rng_seed=seed,
    )


def cmd_diarize(args) -> int:
    options = _merge_options(args, DIARIZE_DEFAULTS)
    dataset = _load_dataset(args)
    config = _pipeline_config(options, args.seed)
    raw = asd_mod.associations_from_csv(_read_text(args.associations, "--associations"))
    if _associations_have_pms(args.associations):
        report = run_pipeline_detailed(dataset, associations=raw, config=config)
    else:
        vas_scores = {a.pair: a.vas for a in raw}
        report = run_pipeline_detailed(dataset, vas_scores=vas_scores, config=config)

    outputs = [
        _write_file(args.output_dir, "hyp.rttm",
                    write_rttm(list(dataset.segments), report.hypothesis)),
        _write_file(args.output_dir, "report.json", _report_json(options, report)),
    ]
    _write_manifest(args.output_dir, "diarize", args.seed, options,
                    _input_paths(args, ["--rttm", "--tracks", "--face-emb",
                                        "--speech-emb", "--associations"]),
                    outputs)
    return 0


def _report_json(options: dict, report) -> str:
    payload = {
        "config": options,
        "num_clusters": report.num_clusters,
        "cluster_sizes": {str(k): v for k, v in report.cluster_sizes.items()},
        "clustered_segments": report.clustered_segments,
        "noisy_segments": report.noisy_segments,
        "filtered_out_segments": report.filtered_out_segments,
        "background_segments": report.background_segments,
        "residual_segments": report.residual_segments,
        "unassigned_segments": len(report.hypothesis.unassigned),
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


BASELINE_DEFAULTS = {
    "row_threshold_percentile": 0.5, "max_speakers": 10,
    "kmeans_restarts": 8, "kmeans_iters": 100,
}


def cmd_baseline(args) -> int:
    options = _merge_options(args, BASELINE_DEFAULTS)
    segments = parse_rttm(_read_text(args.rttm, "--rttm"))
    speech_emb = load_embedding_matrix(_read_text(args.speech_emb, "--speech-emb"))
    recordings = sorted({s.recording for s in segments})
    if len(recordings) != 1:
        raise ValueError(f"expected exactly one recording, found {recordings}")
    dataset = EpisodeDataset(
        recording=recordings[0], segments=tuple(segments), tracks=(),
        face_embeddings=EmbeddingMatrix([], np.zeros((0, 1))),
        speech_embeddings=speech_emb)
    params = SpectralParams(
        row_threshold_percentile=options["row_threshold_percentile"],
        max_speakers=options["max_speakers"],
        kmeans_restarts=options["kmeans_restarts"],
        kmeans_iters=options["kmeans_iters"],
        rng_seed=args.seed,
    )
    hyp = run_audio_baseline(dataset, params)
    payload = {
        "config": options,
        "num_clusters": hyp.num_clusters,
        "cluster_sizes": {str(k): v for k, v in hyp.cluster_sizes().items()},
    }
    outputs = [
        _write_file(args.output_dir, "hyp.rttm", write_rttm(segments, hyp)),
        _write_file(args.output_dir, "report.json",
                    json.dumps(payload, indent=2, sort_keys=True) + "\n"),
    ]
    _write_manifest(args.output_dir, "baseline", args.seed, options,
                    _input_paths(args, ["--rttm", "--speech-emb"]), outputs)
    return 0


def cmd_score(args) -> int:
    reference = parse_rttm(_read_text(args.ref, "--ref"))
    hyp_segments = parse_rttm(_read_text(args.hyp, "--hyp"))
    hypothesis = _hypothesis_from_segments(reference, hyp_segments)
    report = compute_der(reference, hypothesis)
    _write_file(args.output_dir, "der_report.json", report.to_json())
    _write_manifest(args.output_dir, "score", None, {},
                    _input_paths(args, ["--ref", "--hyp"]), ["der_report.json"])
    log.info("DER %.4f (missed %.3fs confusion %.3fs over %.3fs)",
             report.der, report.missed, report.confusion, report.total_ref)
    return 0


def _hypothesis_from_segments(reference, hyp_segments) -> DiarizationHypothesis:
    """Rebuild a hypothesis from an RTTM whose speaker field is spk<label>."""
    ref_times = {s.id: (round(s.start, 3), round(s.duration, 3)) for s in reference}
    assignments: dict[str, int] = {}
    unassigned: set[str] = set()
    for seg in hyp_segments:
        if seg.id not in ref_times:
            raise ValueError(f"hypothesis segment {seg.id} not in reference")
        if ref_times[seg.id] != (round(seg.start, 3), round(seg.duration, 3)):
            raise ValueError(f"segment {seg.id}: hypothesis times differ from reference")
        if seg.speaker is None:
            unassigned.add(seg.id)
        elif seg.speaker.startswith("spk"):
            assignments[seg.id] = int(seg.speaker[3:])
        else:
            raise ValueError(
                f"segment {seg.id}: expected spk<label> or <NA>, got {seg.speaker!r}")
    return DiarizationHypothesis(assignments, frozenset(unassigned))


DISTMAT_DEFAULTS = {
    "score_mode": "combined", "filter_mode": "top", "filter_value": 1.0,
}


def cmd_distmat(args) -> int:
    options = _merge_options(args, DISTMAT_DEFAULTS)
    dataset = _load_dataset(args)
    candidates = asd_mod.candidate_tracks(list(dataset.segments), list(dataset.tracks))

    if args.oracle:
        pairs = simulate.ground_truth_pairs(dataset)
        selected = [asd_mod.Association(s, t, vas=1.0) for s, t in sorted(pairs.items())]
    else:
        if not args.associations:
            raise UsageError("--associations is required unless --oracle is set")
        scored = asd_mod.associations_from_csv(
            _read_text(args.associations, "--associations"))
        best = asd_mod.select_active_faces(scored, candidates, options["score_mode"])
        selected = filter_associations(
            scored, best, FilterConfig(options["filter_mode"], options["filter_value"]))

    matrix = export_distance_matrix(
        selected, dataset.face_embeddings, list(dataset.segments),
        os.path.join(args.output_dir, "distmat.csv"),
        os.path.join(args.output_dir, "distmat.pgm"))
    _write_manifest(args.output_dir, "distmat", None,
                    options | {"oracle": bool(args.oracle)},
                    _input_paths(args, ["--rttm", "--tracks", "--face-emb",
                                        "--speech-emb", "--associations"]),
                    ["distmat.csv", "distmat.pgm"])
    log.info("distance matrix over %d associations", len(matrix))
    return 0


SIMULATE_DEFAULTS = {
    "k_values": [100, 90, 80, 70, 60, 50], "runs": 5, "modes": ["all", "correct"],
    "eps": 0.35, "min_pts": 3,
}


def cmd_simulate(args) -> int:
    options = dict(SIMULATE_DEFAULTS)
    if args.spec:
        spec_json = _load_json(args.spec, "--spec")
        unknown = sorted(set(spec_json) - set(options))
        if unknown:
            raise UsageError(f"--spec: unknown keys {unknown}")
        options.update(spec_json)
    dataset = _load_dataset(args)
    spec = simulate.SimulationSpec(
        k_values=tuple(options["k_values"]),
        runs=options["runs"],
        modes=tuple(options["modes"]),
        rng_seed=args.seed,
        pipeline=PipelineConfig(eps=options["eps"], min_pts=options["min_pts"]),
    )
    rows = simulate.run_simulation(dataset, spec)
    outputs = [
        _write_file(args.output_dir, "simulation_runs.csv",
                    simulate.simulation_runs_csv(rows)),
        _write_file(args.output_dir, "simulation_means.csv",
                    simulate.simulation_means_csv(rows)),
    ]
    _write_manifest(args.output_dir, "simulate", args.seed, options,
                    _input_paths(args, ["--rttm", "--tracks", "--face-emb",
                                        "--speech-emb"]) | {"--spec": args.spec},
                    outputs)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_dataset_flags(sub):
    sub.add_argument("--rttm", required=True, help="oracle speech segments (RTTM)")
    sub.add_argument("--tracks", required=True, help="face tracks (JSON lines)")
    sub.add_argument("--face-emb", required=True, help="face embedding CSV")
    sub.add_argument("--speech-emb", required=True, help="speech embedding CSV")


def _add_common(sub, seed: bool = True, config: bool = True):
    sub.add_argument("-o", "--output-dir", required=True, help="output directory")
    if config:
        sub.add_argument("--config", help="JSON config file; explicit flags win")
    if seed:
        sub.add_argument("--seed", type=int, default=0,
                         help="master RNG seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Speaker diarization of episodic video from active-speaker faces.")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    p = subs.add_parser("synth", help="generate a synthetic ground-truth corpus")
    p.add_argument("--spec", help="JSON file with generator parameters")
    _add_common(p, config=False)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("validate", help="check dataset invariants")
    _add_dataset_flags(p)
    _add_common(p, seed=False, config=False)
    p.set_defaults(func=cmd_validate)

    p = subs.add_parser("asd", help="score speech-face associations")
    _add_dataset_flags(p)
    p.add_argument("--associations", help="CSV with precomputed raw VAS scores")
    p.add_argument("--cams", help="directory of per-segment CAM bundles")
    p.add_argument("--seed-percentile", type=float, dest="seed_percentile")
    p.add_argument("--add-threshold", type=float, dest="add_threshold")
    p.add_argument("--max-iterations", type=int, dest="max_iterations")
    p.add_argument("--eps", type=float)
    p.add_argument("--min-pts", type=int, dest="min_pts")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_asd)

    p = subs.add_parser("diarize", help="face-clustering diarization pipeline")
    _add_dataset_flags(p)
    p.add_argument("--associations", required=True,
                   help="associations CSV (raw VAS, or scored with a pms column)")
    p.add_argument("--score-mode", choices=["vas", "combined"], dest="score_mode")
    p.add_argument("--filter-mode", choices=["top", "absolute"], dest="filter_mode")
    p.add_argument("--filter-value", type=float, dest="filter_value")
    p.add_argument("--eps", type=float)
    p.add_argument("--min-pts", type=int, dest="min_pts")
    p.add_argument("--seed-percentile", type=float, dest="seed_percentile")
    p.add_argument("--add-threshold", type=float, dest="add_threshold")
    p.add_argument("--max-iterations", type=int, dest="max_iterations")
    _add_common(p)
    p.set_defaults(func=cmd_diarize)

    p = subs.add_parser("baseline", help="audio-only spectral-clustering baseline")
    p.add_argument("--rttm", required=True)
    p.add_argument("--speech-emb", required=True)
    p.add_argument("--row-threshold-percentile", type=float,
                   dest="row_threshold_percentile")
    p.add_argument("--max-speakers", type=int, dest="max_speakers")
    p.add_argument("--kmeans-restarts", type=int, dest="kmeans_restarts")
    p.add_argument("--kmeans-iters", type=int, dest="kmeans_iters")
    _add_common(p)
    p.set_defaults(func=cmd_baseline)

    p = subs.add_parser("score", help="diarization error rate against a reference")
    p.add_argument("--ref", required=True, help="reference RTTM with speakers")
    p.add_argument("--hyp", required=True, help="hypothesis RTTM with spk<label>")
    _add_common(p, seed=False, config=False)
    p.set_defaults(func=cmd_score)

    p = subs.add_parser("distmat", help="association distance-matrix export")
    _add_dataset_flags(p)
    p.add_argument("--associations", help="scored associations CSV")
    p.add_argument("--oracle", action="store_true", default=None,
                   help="use the ground-truth pairing instead of scores")
    p.add_argument("--score-mode", choices=["vas", "combined"], dest="score_mode")
    p.add_argument("--filter-mode", choices=["top", "absolute"], dest="filter_mode")
    p.add_argument("--filter-value", type=float, dest="filter_value")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_distmat)

    p = subs.add_parser("simulate", help="ASD-quality impact study")
    _add_dataset_flags(p)
    p.add_argument("--spec", help="JSON file with the simulation grid")
    _add_common(p, config=False)
    p.set_defaults(func=cmd_simulate)

    return parser


def dispatch(argv: list[str]) -> int:
    """Run one CLI invocation; returns the process exit code."""
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        os.makedirs(args.output_dir, exist_ok=True)
        return args.func(args)
    except UsageError as exc:
        print(f"{PROG} {args.subcommand}: error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, ValueError, KeyError) as exc:
        print(f"{PROG} {args.subcommand}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
