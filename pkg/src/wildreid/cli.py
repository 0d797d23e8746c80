"""Command-line driver exposing each pipeline stage and an end-to-end run.

Subcommands: extract, select, match, evaluate, run, synth, db upsert.
Stage artifacts are files written atomically under the configured output
directory, so each stage can be rerun and inspected independently.

Exit codes: 0 success, 1 stage failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from . import core, motion, reid, report, store, synth
from .config import ConfigError, RunConfig, config_to_json, load_config
from .core import FrameRecord, FrameStatus, VideoManifest
from .evaluate import DecisionRule, decide_video, pairwise_significance, video_accuracy
from .keyframes import (KeyFrameSet, keyframes_filename, load_keyframe_sets,
                        save_keyframe_sets, select_keyframes)
from .reid import image_accuracy, load_matches, match_all, matches_filename, save_matches
from .report import EvaluationReport, MethodReport, render_figures, write_report

log = logging.getLogger("wildreid")


class StageError(RuntimeError):
    """A pipeline stage cannot run or finished with failures."""


def _require(path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise StageError(f"missing {path}; run the `{produced_by}` stage first")
    return path


def _load_frame(manifest: VideoManifest, index: int) -> np.ndarray:
    with Image.open(manifest.frame_path(index)) as img:
        return np.asarray(img)


def _extract_video(manifest: VideoManifest,
                   detections: Mapping[int, core.BoundingBox],
                   config: RunConfig) -> list[FrameRecord]:
    scores = motion.score_video_frames(
        lambda i: _load_frame(manifest, i), manifest.frame_count, config.flow)
    detected: list[FrameRecord] = []
    others: list[FrameRecord] = []
    for i in range(manifest.frame_count):
        rec = FrameRecord(video_id=manifest.video_id, frame_index=i)
        box = detections.get(i)
        if box is None:
            others.append(rec.advance(FrameStatus.DISCARDED_NO_DETECTION,
                                      motion_score=scores[i]))
        else:
            detected.append(rec.advance(FrameStatus.DETECTED, detection=box,
                                        motion_score=scores[i]))
    candidates, high_motion = motion.blur_filter(detected, config.blur_fraction)
    return sorted(others + candidates + high_motion, key=lambda r: r.frame_index)


def extraction_summary_rows(frames_by_video: Mapping[str, Sequence[FrameRecord]],
                            labels: Mapping[str, str]) -> list[dict]:
    """Per-video extraction counts plus a totals row (videos / total frames /
    detected frames / low-motion candidates)."""
    rows = []
    totals = {"videos": 0, "total_frames": 0, "detected_frames": 0, "candidate_frames": 0}
    for video_id in sorted(frames_by_video):
        records = frames_by_video[video_id]
        detected = sum(1 for r in records if r.status in
                       (FrameStatus.DETECTED, FrameStatus.CANDIDATE,
                        FrameStatus.KEYFRAME, FrameStatus.DISCARDED_HIGH_MOTION))
        candidates = sum(1 for r in records
                         if r.status in (FrameStatus.CANDIDATE, FrameStatus.KEYFRAME))
        rows.append({"video_id": video_id, "label": labels.get(video_id, ""),
                     "total_frames": len(records), "detected_frames": detected,
                     "candidate_frames": candidates})
        totals["videos"] += 1
        totals["total_frames"] += len(records)
        totals["detected_frames"] += detected
        totals["candidate_frames"] += candidates
    rows.append({"video_id": "TOTAL", "label": "", "videos": totals["videos"],
                 "total_frames": totals["total_frames"],
                 "detected_frames": totals["detected_frames"],
                 "candidate_frames": totals["candidate_frames"]})
    return rows


def _extract_worker(manifest: VideoManifest,
                    detections: Mapping[int, core.BoundingBox],
                    config: RunConfig) -> tuple[str, list[FrameRecord]]:
    return manifest.video_id, _extract_video(manifest, detections, config)


def run_extract(config: RunConfig) -> dict[str, list[FrameRecord]]:
    manifests = core.load_manifest(config.dataset_root)
    detections = core.load_detections(config.detections_path, config.confidence_floor)
    out = Path(config.output_dir)
    workers = config.workers or os.cpu_count() or 1

    frames_by_video: dict[str, list[FrameRecord]] = {}
    failures: list[str] = []

    # Flow scoring is CPU-bound numpy over many small arrays, so per-video
    # parallelism uses processes, not threads.
    if workers > 1 and len(manifests) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_extract_worker, m,
                                   detections.get(m.video_id, {}), config)
                       for m in manifests]
            for m, fut in zip(manifests, futures):
                try:
                    video_id, records = fut.result()
                    frames_by_video[video_id] = records
                except Exception as exc:
                    log.error("extract failed for %s: %s", m.video_id, exc)
                    failures.append(m.video_id)
    else:
        for m in manifests:
            try:
                video_id, records = _extract_worker(
                    m, detections.get(m.video_id, {}), config)
                frames_by_video[video_id] = records
            except Exception as exc:
                log.error("extract failed for %s: %s", m.video_id, exc)
                failures.append(m.video_id)

    all_records = [r for vid in sorted(frames_by_video)
                   for r in frames_by_video[vid]]
    core.save_frame_records(all_records, out / "frames.jsonl")
    motion.save_motion_scores(
        ((r.video_id, r.frame_index, r.motion_score or 0.0) for r in all_records),
        out / "motion_scores.csv")

    labels = {m.video_id: m.true_label for m in manifests if m.true_label}
    for row in extraction_summary_rows(frames_by_video, labels):
        log.info("extract %s: frames=%s detected=%s candidates=%s",
                 row["video_id"], row["total_frames"], row["detected_frames"],
                 row["candidate_frames"])
    if failures:
        raise StageError(f"extract failed for {len(failures)} video(s): {failures}")
    return frames_by_video


def _candidate_embeddings(config: RunConfig):
    frames = core.load_frame_records(
        _require(Path(config.output_dir) / "frames.jsonl", "extract"))
    emb = store.read_store(_require(Path(config.embeddings_path), "embeddings export"))
    by_video: dict[str, tuple[list[int], list[np.ndarray]]] = {}
    for rec in frames:
        if rec.status is not FrameStatus.CANDIDATE:
            continue
        found = emb.get(rec.video_id, rec.frame_index)
        if found is None:
            raise StageError(
                f"no embedding for candidate {rec.video_id}/{rec.frame_index}; "
                "regenerate the embeddings file")
        indices, vectors = by_video.setdefault(rec.video_id, ([], []))
        vec = found.vector.astype(np.float64)
        if config.normalize_embeddings:
            norm = np.linalg.norm(vec)
            if norm > 0:
                vec = vec / norm
        indices.append(rec.frame_index)
        vectors.append(vec)
    return by_video, emb


def run_select(config: RunConfig) -> dict[str, list[KeyFrameSet]]:
    by_video, _ = _candidate_embeddings(config)
    out = Path(config.output_dir)
    sets_by_method: dict[str, list[KeyFrameSet]] = {}
    for method in config.selection_methods():
        sets = []
        for video_id in sorted(by_video):
            indices, vectors = by_video[video_id]
            sets.append(select_keyframes(
                video_id, indices, np.asarray(vectors), method,
                umap_params=config.umap, k_min=config.k_min, k_max=config.k_max))
        save_keyframe_sets(sets, out / keyframes_filename(method))
        sets_by_method[method.name] = sets
        log.info("select %s: %d videos, %d key frames", method.name, len(sets),
                 sum(len(s.key_frame_indices) for s in sets))
    return sets_by_method


def run_match(config: RunConfig) -> dict[str, list[reid.MatchResult]]:
    out = Path(config.output_dir)
    emb = store.read_store(_require(Path(config.embeddings_path), "embeddings export"))
    labels = core.load_labels(Path(config.dataset_root) / "labels.csv") \
        if (Path(config.dataset_root) / "labels.csv").is_file() else {}

    results_by_method: dict[str, list[reid.MatchResult]] = {}
    for method in config.selection_methods():
        kf_path = _require(out / keyframes_filename(method), "select")
        sets = load_keyframe_sets(kf_path)
        gallery_records = []
        queries = []
        skipped = 0
        for kfs in sets:
            label = labels.get(kfs.video_id)
            for idx in kfs.key_frame_indices:
                rec = emb.get(kfs.video_id, idx)
                if rec is None:
                    raise StageError(
                        f"no embedding for key frame {kfs.video_id}/{idx}; rerun select")
                if label is None:
                    skipped += 1
                    continue
                labelled = core.EmbeddingRecord(
                    video_id=rec.video_id, frame_index=rec.frame_index,
                    encoder_id=rec.encoder_id, vector=rec.vector, label=label)
                gallery_records.append(labelled)
                queries.append(labelled)
        if skipped:
            log.warning("match %s: skipped %d key frames of unlabelled videos",
                        method.name, skipped)
        gallery = store.EmbeddingStore(emb.encoder_id, emb.dim, gallery_records)
        results = match_all(queries, gallery, labels)
        save_matches(results, out / matches_filename(method.name))
        results_by_method[method.name] = results
        log.info("match %s: %d key frames matched", method.name, len(results))
    return results_by_method


def run_evaluate(config: RunConfig) -> EvaluationReport:
    out = Path(config.output_dir)
    per_method: dict[str, MethodReport] = {}
    vote_outcomes: dict[str, dict[str, bool]] = {}
    sets_by_method: dict[str, list[KeyFrameSet]] = {}

    for method in config.selection_methods():
        matches = load_matches(_require(out / matches_filename(method.name), "match"))
        sets_by_method[method.name] = load_keyframe_sets(
            _require(out / keyframes_filename(method), "select"))
        if not matches:
            raise StageError(f"no matches recorded for method {method.name}")

        by_video: dict[str, list[reid.MatchResult]] = {}
        for m in matches:
            by_video.setdefault(m.query_video, []).append(m)

        accuracies: dict[str, float] = {}
        for rule in DecisionRule:
            decisions = []
            for video_id in sorted(by_video):
                frame_results = by_video[video_id]
                decisions.append(decide_video(
                    video_id, method.name, rule,
                    [m.predicted_label for m in frame_results],
                    [m.similarity for m in frame_results],
                    frame_results[0].true_label))
            accuracies[rule.value] = video_accuracy(decisions).overall
            if rule is DecisionRule.VOTE:
                vote_outcomes[method.name] = {d.video_id: d.correct for d in decisions}

        per_method[method.name] = MethodReport(
            method=method.name,
            image_accuracy=image_accuracy(matches).overall,
            video_accuracy=accuracies,
            keyframe_count=sum(len(s.key_frame_indices)
                               for s in sets_by_method[method.name]))

    method_names = [m.name for m in config.selection_methods()]
    mcnemar = tuple(pairwise_significance(method_names, vote_outcomes)
                    if len(method_names) > 1 else ())
    result = EvaluationReport(dataset_id=config.dataset_name,
                              per_method=per_method, mcnemar=mcnemar)
    write_report(result, out)

    scores_by_video = discarded = None
    frames_path = out / "frames.jsonl"
    if frames_path.exists():
        records = core.load_frame_records(frames_path)
        scores_by_video = {}
        discarded = {}
        for rec in records:
            scores_by_video.setdefault(rec.video_id, {})[rec.frame_index] = \
                rec.motion_score or 0.0
            if rec.status is FrameStatus.DISCARDED_HIGH_MOTION:
                discarded.setdefault(rec.video_id, set()).add(rec.frame_index)
    render_figures(result, sets_by_method, scores_by_video, discarded, out)
    log.info("evaluate: wrote report.json / report.csv / figures to %s", out)
    return result


def run_all(config: RunConfig) -> EvaluationReport:
    run_extract(config)
    run_select(config)
    run_match(config)
    return run_evaluate(config)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="run configuration JSON")
    parser.add_argument("--seed", type=int, default=None, help="override the run seed")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker threads for per-video stages")
    parser.add_argument("--output", type=Path, default=None,
                        help="override the output directory")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    return load_config(args.config, seed=args.seed, workers=args.workers,
                       output_dir=args.output)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wildreid",
        description="Key-frame extraction and re-identification pipeline "
                    "for wildlife video")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, doc in (("extract", "score motion, apply detections, filter blur"),
                      ("select", "choose key frames per selection method"),
                      ("match", "match key frames against the labelled gallery"),
                      ("evaluate", "decide video identities and write the report"),
                      ("run", "run all pipeline stages end to end")):
        p = sub.add_parser(name, help=doc)
        _add_common(p)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset with ground truth")
    p_synth.add_argument("--out", type=Path, required=True)
    p_synth.add_argument("--individuals", type=int, default=7)
    p_synth.add_argument("--videos-per-individual", type=int, default=4)
    p_synth.add_argument("--frames", type=int, default=60)
    p_synth.add_argument("--noise", type=float, default=0.01)
    p_synth.add_argument("--dim", type=int, default=16)
    p_synth.add_argument("--frame-size", type=int, default=96)
    p_synth.add_argument("--seed", type=int, default=0)

    p_db = sub.add_parser("db", help="gallery database maintenance")
    db_sub = p_db.add_subparsers(dest="db_command", required=True)
    p_upsert = db_sub.add_parser(
        "upsert", help="merge embeddings (optionally labelled) into a gallery store")
    p_upsert.add_argument("--store", type=Path, required=True,
                          help="gallery .emb file to update (created if missing)")
    p_upsert.add_argument("--from", dest="source", type=Path, required=True,
                          help=".emb file with the records to merge")
    p_upsert.add_argument("--labels", type=Path, default=None,
                          help="labels.csv used to stamp labels onto merged records")

    return parser


def cmd_synth(args: argparse.Namespace) -> None:
    profile = synth.SynthProfile(
        individuals=args.individuals,
        videos_per_individual=args.videos_per_individual,
        frames_per_video=args.frames,
        embedding_noise=args.noise,
        embedding_dim=args.dim,
        frame_height=args.frame_size,
        frame_width=args.frame_size,
        seed=args.seed,
    )
    synth.generate(profile, args.out)
    config = RunConfig(
        dataset_root=Path("."), detections_path=Path("detections.jsonl"),
        embeddings_path=Path("embeddings.emb"), output_dir=Path("output"),
        seed=args.seed)
    core.atomic_write_text(args.out / "config.json", config_to_json(config))
    log.info("synth: wrote dataset and config.json under %s", args.out)


def cmd_db_upsert(args: argparse.Namespace) -> None:
    source = store.read_store(_require(args.source, "embeddings export"))
    labels = core.load_labels(args.labels) if args.labels else {}
    records = [core.EmbeddingRecord(
        video_id=r.video_id, frame_index=r.frame_index, encoder_id=r.encoder_id,
        vector=r.vector, label=labels.get(r.video_id, r.label))
        for r in source]
    if args.store.exists():
        gallery = store.read_store(args.store)
    else:
        gallery = store.EmbeddingStore(source.encoder_id, source.dim)
    updated = gallery.upsert(records)
    store.write_store(updated, args.store)
    log.info("db upsert: %d records merged; store now holds %d", len(records),
             len(updated))


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            cmd_synth(args)
        elif args.command == "db":
            cmd_db_upsert(args)
        else:
            config = _config_from_args(args)
            stage = {"extract": run_extract, "select": run_select,
                     "match": run_match, "evaluate": run_evaluate,
                     "run": run_all}[args.command]
            stage(config)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 2
    except (StageError, core.DataFormatError, store.StoreFormatError,
            store.StoreError, OSError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
