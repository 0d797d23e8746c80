"""Synthetic dataset generator for desk-scale verification.

Produces textured frames moved by scripted integer translations (so flow
ground truth is exact), one detection per frame, per-individual embedding
cluster centers with Gaussian noise, and the matching manifest/labels files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .core import BoundingBox, atomic_write_text, save_detections, save_labels
from .store import EmbeddingRecord, EmbeddingStore, write_store

SYNTH_ENCODER_ID = "synthetic-projection"

# (first_moving_frame, last_moving_frame, dx, dy): frames in the inclusive
# range are each shifted by (dx, dy) relative to their predecessor.
Move = tuple[int, int, int, int]

DEFAULT_MOVES: tuple[Move, ...] = ((10, 20, 2, 0), (40, 46, 0, -2))


@dataclass(frozen=True)
class SynthProfile:
    individuals: int = 7
    videos_per_individual: int = 4
    frames_per_video: int = 60
    embedding_noise: float = 0.01
    embedding_dim: int = 16
    frame_height: int = 96
    frame_width: int = 96
    fps: float = 30.0
    moves: tuple[Move, ...] = DEFAULT_MOVES
    detection_confidence: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if self.individuals < 1 or self.videos_per_individual < 1:
            raise ValueError("need at least one individual and one video each")
        if self.frames_per_video < 1:
            raise ValueError("frames_per_video must be positive")
        if self.embedding_noise < 0:
            raise ValueError("embedding_noise must be non-negative")
        if self.embedding_dim < self.individuals:
            raise ValueError("embedding_dim must be at least the individual count")
        if min(self.frame_height, self.frame_width) < 32:
            raise ValueError("frames must be at least 32x32")
        for start, end, _, _ in self.moves:
            if not 1 <= start <= end:
                raise ValueError(f"bad move range [{start},{end}]")


@dataclass(frozen=True)
class SynthVideo:
    video_id: str
    label: str
    frame_count: int
    shifts: tuple[tuple[int, int], ...]  # per-frame shift relative to predecessor

    @property
    def true_scores(self) -> list[float]:
        return [math.hypot(dx, dy) for dx, dy in self.shifts]


@dataclass(frozen=True)
class SynthGroundTruth:
    profile: SynthProfile
    videos: tuple[SynthVideo, ...]
    label_of: dict[str, str] = field(default_factory=dict)

    def expected_candidates(self, video_id: str, blur_fraction: float = 0.2) -> int:
        video = next(v for v in self.videos if v.video_id == video_id)
        n = video.frame_count
        return n - min(n, max(0, math.ceil(blur_fraction * n - 1e-9)))


def _texture(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    noise = rng.random((height, width))
    smooth = ndimage.gaussian_filter(noise, 2.0, mode="wrap")
    lo, hi = smooth.min(), smooth.max()
    return 0.15 + 0.7 * (smooth - lo) / (hi - lo)


def _video_shifts(profile: SynthProfile) -> list[tuple[int, int]]:
    shifts = [(0, 0)] * profile.frames_per_video
    for start, end, dx, dy in profile.moves:
        for i in range(start, min(end, profile.frames_per_video - 1) + 1):
            shifts[i] = (dx, dy)
    return shifts


def generate(profile: SynthProfile, out_root: Path | str) -> SynthGroundTruth:
    """Write a complete synthetic dataset under ``out_root``.

    Emits the frame directories, manifest.json, labels.csv, detections.jsonl,
    embeddings.emb, and ground_truth.json.
    """
    root = Path(out_root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(profile.seed)

    centers = np.eye(profile.embedding_dim, dtype=np.float64)[:profile.individuals]

    manifest_entries = []
    labels: dict[str, str] = {}
    detections: list[tuple[str, int, BoundingBox]] = []
    records: list[EmbeddingRecord] = []
    videos: list[SynthVideo] = []
    box = BoundingBox(cx=0.5, cy=0.5, w=0.5, h=0.5,
                      confidence=profile.detection_confidence)

    for g in range(profile.individuals):
        label = f"B{g:02d}"
        for j in range(profile.videos_per_individual):
            video_id = f"b{g:02d}v{j}"
            shifts = _video_shifts(profile)
            base = _texture(rng, profile.frame_height, profile.frame_width)
            frame_dir = root / video_id
            frame_dir.mkdir(parents=True, exist_ok=True)

            off_x = off_y = 0
            for i, (dx, dy) in enumerate(shifts):
                off_x += dx
                off_y += dy
                frame = np.roll(base, (off_y, off_x), axis=(0, 1))
                img = Image.fromarray((frame * 255).round().astype(np.uint8), mode="L")
                img.save(frame_dir / f"frame_{i:06d}.png")
                detections.append((video_id, i, box))
                vector = centers[g] + rng.normal(0.0, profile.embedding_noise,
                                                 profile.embedding_dim)
                records.append(EmbeddingRecord(
                    video_id=video_id, frame_index=i, encoder_id=SYNTH_ENCODER_ID,
                    vector=vector.astype(np.float32), label=None))

            manifest_entries.append({"video_id": video_id, "fps": profile.fps,
                                     "frame_count": profile.frames_per_video})
            labels[video_id] = label
            videos.append(SynthVideo(video_id=video_id, label=label,
                                     frame_count=profile.frames_per_video,
                                     shifts=tuple(shifts)))

    atomic_write_text(root / "manifest.json",
                      json.dumps(manifest_entries, indent=2, sort_keys=True) + "\n")
    save_labels(labels, root / "labels.csv")
    save_detections(detections, root / "detections.jsonl")
    write_store(EmbeddingStore(SYNTH_ENCODER_ID, profile.embedding_dim, records),
                root / "embeddings.emb")

    truth = SynthGroundTruth(profile=profile, videos=tuple(videos), label_of=labels)
    atomic_write_text(root / "ground_truth.json", json.dumps({
        "profile": {
            "individuals": profile.individuals,
            "videos_per_individual": profile.videos_per_individual,
            "frames_per_video": profile.frames_per_video,
            "embedding_noise": profile.embedding_noise,
            "embedding_dim": profile.embedding_dim,
            "seed": profile.seed,
        },
        "videos": [{
            "video_id": v.video_id,
            "label": v.label,
            "frame_count": v.frame_count,
            "shifts": [list(s) for s in v.shifts],
        } for v in videos],
    }, indent=2, sort_keys=True) + "\n")
    return truth
