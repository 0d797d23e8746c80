"""Shared domain types and on-disk interchange formats.

Dataset layout on disk:

* ``<dataset_root>/manifest.json`` -- array of ``{video_id, fps, frame_count}``
* ``<dataset_root>/labels.csv``    -- header ``video_id,label``, one row per labelled video
* ``<dataset_root>/<video_id>/frame_<index:06d>.png`` -- 8-bit RGB or grayscale frames
* ``detections.jsonl``             -- one object per line:
  ``{video_id, frame_index, bbox:[cx,cy,w,h], confidence, class}``
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import re
import tempfile
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

log = logging.getLogger(__name__)

FRAME_FILE_RE = re.compile(r"^frame_(\d{6})\.png$")

# Raw bbox fields may stray outside [0,1] by at most this much before we refuse the row.
CLAMP_TOLERANCE = 1e-6


class DataFormatError(ValueError):
    """An interchange file violates its format contract."""


class FrameStatus(Enum):
    RAW = "raw"
    DETECTED = "detected"
    CANDIDATE = "candidate"
    KEYFRAME = "keyframe"
    DISCARDED_NO_DETECTION = "discarded_no_detection"
    DISCARDED_HIGH_MOTION = "discarded_high_motion"


# The only lifecycle moves a frame may take. Everything else is a bug.
ALLOWED_TRANSITIONS: dict[FrameStatus, frozenset[FrameStatus]] = {
    FrameStatus.RAW: frozenset({FrameStatus.DETECTED, FrameStatus.DISCARDED_NO_DETECTION}),
    FrameStatus.DETECTED: frozenset({FrameStatus.CANDIDATE, FrameStatus.DISCARDED_HIGH_MOTION}),
    FrameStatus.CANDIDATE: frozenset({FrameStatus.KEYFRAME}),
    FrameStatus.KEYFRAME: frozenset(),
    FrameStatus.DISCARDED_NO_DETECTION: frozenset(),
    FrameStatus.DISCARDED_HIGH_MOTION: frozenset(),
}


@dataclass(frozen=True)
class VideoManifest:
    video_id: str
    dataset_id: str
    frame_count: int
    fps: float
    true_label: str | None = None
    frame_dir: Path | None = None

    def __post_init__(self):
        if self.frame_count < 0:
            raise DataFormatError(f"{self.video_id}: frame_count must be non-negative")
        if self.fps <= 0:
            raise DataFormatError(f"{self.video_id}: fps must be positive")

    def frame_path(self, frame_index: int) -> Path:
        if self.frame_dir is None:
            raise ValueError(f"{self.video_id}: no frame_dir attached")
        return self.frame_dir / f"frame_{frame_index:06d}.png"


@dataclass(frozen=True)
class BoundingBox:
    """Center-format box in normalized image coordinates."""

    cx: float
    cy: float
    w: float
    h: float
    confidence: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataFormatError(f"bbox {name}={v} outside [0,1]")
        if self.w <= 0 or self.h <= 0:
            raise DataFormatError(f"bbox has non-positive size w={self.w} h={self.h}")
        if not 0.0 <= self.confidence <= 1.0:
            raise DataFormatError(f"bbox confidence={self.confidence} outside [0,1]")
        for edge in (self.cx - self.w / 2, self.cx + self.w / 2,
                     self.cy - self.h / 2, self.cy + self.h / 2):
            if edge < -CLAMP_TOLERANCE or edge > 1.0 + CLAMP_TOLERANCE:
                raise DataFormatError(f"bbox extends outside the unit square: edge={edge}")

    @staticmethod
    def clamped(cx: float, cy: float, w: float, h: float, confidence: float) -> "BoundingBox":
        """Build a box, pulling edges that overflow the unit square back onto it.

        Raw field values more than CLAMP_TOLERANCE outside [0,1] are rejected;
        overflowing edges (e.g. cx + w/2 > 1) are clamped and cx/w recomputed.
        """
        for name, v in (("cx", cx), ("cy", cy), ("w", w), ("h", h)):
            if v < -CLAMP_TOLERANCE or v > 1.0 + CLAMP_TOLERANCE:
                raise DataFormatError(f"bbox {name}={v} outside [0,1] beyond clamp tolerance")
        cx = min(max(cx, 0.0), 1.0)
        cy = min(max(cy, 0.0), 1.0)
        w = min(max(w, 0.0), 1.0)
        h = min(max(h, 0.0), 1.0)
        edges = (cx - w / 2, cx + w / 2, cy - h / 2, cy + h / 2)
        clamped = tuple(min(max(e, 0.0), 1.0) for e in edges)
        if clamped != edges:
            x0, x1, y0, y1 = clamped
            if x1 <= x0 or y1 <= y0:
                raise DataFormatError("bbox collapses to zero size after clamping")
            cx, w = (x0 + x1) / 2, x1 - x0
            cy, h = (y0 + y1) / 2, y1 - y0
        return BoundingBox(cx=cx, cy=cy, w=w, h=h, confidence=confidence)


@dataclass(frozen=True)
class FrameRecord:
    video_id: str
    frame_index: int
    status: FrameStatus = FrameStatus.RAW
    detection: BoundingBox | None = None
    motion_score: float | None = None

    def __post_init__(self):
        if self.frame_index < 0:
            raise DataFormatError(f"{self.video_id}: negative frame_index")
        if self.status in (FrameStatus.CANDIDATE, FrameStatus.KEYFRAME):
            if self.detection is None or self.motion_score is None:
                raise DataFormatError(
                    f"{self.video_id}/{self.frame_index}: status {self.status.value} "
                    "requires detection and motion_score")
        if self.motion_score is not None and self.motion_score < 0:
            raise DataFormatError(f"{self.video_id}/{self.frame_index}: negative motion score")

    def advance(self, status: FrameStatus, **updates) -> "FrameRecord":
        """Return a copy moved to ``status``; raises on an illegal transition."""
        if status not in ALLOWED_TRANSITIONS[self.status]:
            raise ValueError(
                f"{self.video_id}/{self.frame_index}: illegal transition "
                f"{self.status.value} -> {status.value}")
        return replace(self, status=status, **updates)


@dataclass(frozen=True)
class EmbeddingRecord:
    video_id: str
    frame_index: int
    encoder_id: str
    vector: np.ndarray  # 1-D float32
    label: str | None = None

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float32)
        if vec.ndim != 1 or vec.size == 0:
            raise DataFormatError(f"{self.key}: vector must be a non-empty 1-D array")
        if not np.all(np.isfinite(vec)):
            raise DataFormatError(f"{self.key}: vector contains non-finite values")
        object.__setattr__(self, "vector", vec)

    @property
    def key(self) -> str:
        return f"{self.video_id}/{self.frame_index}"

    def __eq__(self, other):
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return (self.video_id == other.video_id
                and self.frame_index == other.frame_index
                and self.encoder_id == other.encoder_id
                and self.label == other.label
                and np.array_equal(self.vector, other.vector))

    def __hash__(self):
        return hash((self.video_id, self.frame_index, self.encoder_id, self.label,
                     self.vector.tobytes()))


def atomic_write_bytes(path: Path | str, data: bytes) -> None:
    """Write via a temp file in the same directory plus rename, so readers never
    observe a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path | str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def load_manifest(dataset_root: Path | str) -> list[VideoManifest]:
    """Read manifest.json (+ labels.csv if present) under ``dataset_root``.

    frame_count is checked against the frame files actually on disk.
    """
    root = Path(dataset_root)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DataFormatError(f"missing manifest file: {manifest_path}")
    try:
        entries = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{manifest_path}: invalid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise DataFormatError(f"{manifest_path}: expected a JSON array")

    labels = load_labels(root / "labels.csv") if (root / "labels.csv").is_file() else {}

    manifests: list[VideoManifest] = []
    seen: set[str] = set()
    for entry in entries:
        try:
            video_id = str(entry["video_id"])
            fps = float(entry["fps"])
            frame_count = int(entry["frame_count"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{manifest_path}: bad entry {entry!r}: {exc}") from exc
        if video_id in seen:
            raise DataFormatError(f"{manifest_path}: duplicate video_id {video_id!r}")
        seen.add(video_id)
        frame_dir = root / video_id
        on_disk = count_frame_files(frame_dir)
        if on_disk != frame_count:
            raise DataFormatError(
                f"{video_id}: manifest claims {frame_count} frames "
                f"but {on_disk} frame files exist in {frame_dir}")
        manifests.append(VideoManifest(
            video_id=video_id,
            dataset_id=root.name,
            frame_count=frame_count,
            fps=fps,
            true_label=labels.get(video_id),
            frame_dir=frame_dir,
        ))
    return manifests


def count_frame_files(frame_dir: Path) -> int:
    if not frame_dir.is_dir():
        return 0
    return sum(1 for p in frame_dir.iterdir() if FRAME_FILE_RE.match(p.name))


def load_labels(path: Path | str) -> dict[str, str]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["video_id", "label"]:
            raise DataFormatError(f"{path}: expected header 'video_id,label'")
        labels: dict[str, str] = {}
        for row in reader:
            labels[row["video_id"]] = row["label"]
    return labels


def save_labels(labels: Mapping[str, str], path: Path | str) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["video_id", "label"])
    for vid, lab in labels.items():
        writer.writerow([vid, lab])
    atomic_write_text(path, buf.getvalue())


def load_detections(path: Path | str,
                    confidence_floor: float = 0.8) -> dict[str, dict[int, BoundingBox]]:
    """Parse detections.jsonl into ``{video_id: {frame_index: box}}``.

    Rows below ``confidence_floor`` are dropped.  When several rows hit the
    same frame, the highest-confidence box wins and the event is logged.
    """
    path = Path(path)
    out: dict[str, dict[int, BoundingBox]] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                video_id = str(row["video_id"])
                frame_index = int(row["frame_index"])
                cx, cy, w, h = (float(v) for v in row["bbox"])
                confidence = float(row["confidence"])
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise DataFormatError(f"{path}:{lineno}: malformed row: {exc}") from exc
            if confidence < confidence_floor:
                continue
            try:
                box = BoundingBox.clamped(cx, cy, w, h, confidence)
            except DataFormatError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            frames = out.setdefault(video_id, {})
            if frame_index in frames:
                prev = frames[frame_index]
                log.warning("%s: multiple detections for %s/%s; keeping the higher-"
                            "confidence box", path.name, video_id, frame_index)
                if confidence <= prev.confidence:
                    continue
            frames[frame_index] = box
    return out


def save_detections(rows: Iterable[tuple[str, int, BoundingBox]], path: Path | str,
                    class_name: str = "kaka") -> None:
    lines = []
    for video_id, frame_index, box in rows:
        lines.append(json.dumps({
            "video_id": video_id,
            "frame_index": frame_index,
            "bbox": [box.cx, box.cy, box.w, box.h],
            "confidence": box.confidence,
            "class": class_name,
        }, sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def save_frame_records(records: Iterable[FrameRecord], path: Path | str) -> None:
    """Persist frame lifecycle state as frames.jsonl, one record per line."""
    lines = []
    ordered = sorted(records, key=lambda r: (r.video_id, r.frame_index))
    for rec in ordered:
        bbox = None
        if rec.detection is not None:
            d = rec.detection
            bbox = [d.cx, d.cy, d.w, d.h, d.confidence]
        lines.append(json.dumps({
            "video_id": rec.video_id,
            "frame_index": rec.frame_index,
            "status": rec.status.value,
            "motion_score": rec.motion_score,
            "bbox": bbox,
        }, sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def load_frame_records(path: Path | str) -> list[FrameRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                detection = None
                if row["bbox"] is not None:
                    cx, cy, w, h, conf = row["bbox"]
                    detection = BoundingBox(cx=cx, cy=cy, w=w, h=h, confidence=conf)
                records.append(FrameRecord(
                    video_id=row["video_id"], frame_index=row["frame_index"],
                    status=FrameStatus(row["status"]),
                    detection=detection, motion_score=row["motion_score"]))
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise DataFormatError(f"{path}:{lineno}: malformed row: {exc}") from exc
    return records


def _round_half_away(v: float) -> int:
    # Deterministic half-away-from-zero rounding; values here are always >= 0.
    return int(math.floor(v + 0.5))


def crop_bounds(width: int, height: int, box: BoundingBox) -> tuple[int, int, int, int]:
    """Pixel rectangle (x0, x1, y0, y1) covered by ``box`` on a width x height image.

    Edges are rounded half-away-from-zero in pixel space; the right/bottom
    bounds are exclusive.
    """
    x0 = _round_half_away((box.cx - box.w / 2) * width)
    x1 = _round_half_away((box.cx + box.w / 2) * width)
    y0 = _round_half_away((box.cy - box.h / 2) * height)
    y1 = _round_half_away((box.cy + box.h / 2) * height)
    return x0, x1, y0, y1


def crop_frame(image: np.ndarray, box: BoundingBox, *, frame: str = "") -> np.ndarray:
    """Crop the pixel rectangle selected by ``box`` out of ``image`` (H x W[ x C])."""
    if image.ndim not in (2, 3) or image.shape[0] == 0 or image.shape[1] == 0:
        raise ValueError(f"crop_frame{' ' + frame if frame else ''}: empty or non-image input")
    height, width = image.shape[:2]
    x0, x1, y0, y1 = crop_bounds(width, height, box)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(
            f"degenerate crop{' for frame ' + frame if frame else ''}: "
            f"box {box} rounds to zero area on {width}x{height}")
    return image[y0:y1, x0:x1]
