"""Inference passes over frame directories.

Frame layout is the pipeline's: ``<root>/<video_id>/frame_<index:06d>.png``;
a directory holding frame files directly is treated as a single video.
"""

from __future__ import annotations

import json
import logging
import re
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .config import AdapterConfig, AdapterError
from .crop import crop_image
from .formats import write_detections, write_emb
from .models import make_detector, make_encoder

log = logging.getLogger("reid_adapter")

FRAME_FILE_RE = re.compile(r"^frame_(\d{6})\.png$")


def iter_videos(frames_root: Path) -> list[tuple[str, list[tuple[int, Path]]]]:
    root = Path(frames_root)
    if not root.is_dir():
        raise AdapterError(f"frames directory not found: {root}")

    def frames_in(directory: Path):
        found = []
        for entry in sorted(directory.iterdir()):
            match = FRAME_FILE_RE.match(entry.name)
            if match:
                found.append((int(match.group(1)), entry))
        return found

    direct = frames_in(root)
    if direct:
        return [(root.name, direct)]
    videos = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        frames = frames_in(sub)
        if frames:
            videos.append((sub.name, frames))
    if not videos:
        raise AdapterError(f"no frame files under {root}")
    return videos


def _read_frame(path: Path) -> np.ndarray | None:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (OSError, UnidentifiedImageError) as exc:
        log.warning("unreadable frame %s: %s", path, exc)
        return None


def detect(frames_root: Path | str, out_path: Path | str,
           config: AdapterConfig = AdapterConfig(),
           class_name: str = "kaka") -> int:
    """Run the detector over every frame; one output line per frame with a
    detection at or above the confidence floor (best box wins).

    Returns the number of detection lines written; unreadable frames are
    skipped with a warning and counted in the log.
    """
    detector = make_detector(config)
    rows = []
    unreadable = 0
    for video_id, frames in iter_videos(Path(frames_root)):
        for frame_index, path in frames:
            image = _read_frame(path)
            if image is None:
                unreadable += 1
                continue
            candidates = [(box, conf) for box, conf in detector(image)
                          if conf >= config.confidence_floor]
            if not candidates:
                continue
            box, confidence = max(candidates, key=lambda c: c[1])
            cx, cy, w, h = box
            rows.append({"video_id": video_id, "frame_index": frame_index,
                         "bbox": [cx, cy, w, h], "confidence": confidence,
                         "class": class_name})
    write_detections(rows, out_path)
    log.info("detect: %d detections, %d unreadable frames", len(rows), unreadable)
    return len(rows)


def _load_boxes(detections_path: Path) -> dict[str, dict[int, tuple[float, float, float, float]]]:
    boxes: dict[str, dict[int, tuple[float, float, float, float]]] = {}
    with Path(detections_path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                cx, cy, w, h = (float(v) for v in row["bbox"])
                boxes.setdefault(str(row["video_id"]), {})[int(row["frame_index"])] = \
                    (cx, cy, w, h)
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise AdapterError(f"{detections_path}:{lineno}: malformed row: {exc}") from exc
    return boxes


def _preprocess(crop: np.ndarray, config: AdapterConfig) -> np.ndarray:
    size = config.input_size
    resized = np.asarray(Image.fromarray(crop).resize((size, size), Image.BILINEAR))
    scaled = resized.astype(np.float32) / 255.0
    mean = np.asarray(config.normalization_mean, dtype=np.float32)
    std = np.asarray(config.normalization_std, dtype=np.float32)
    return (scaled - mean) / std


def embed(frames_root: Path | str, detections_path: Path | str,
          out_path: Path | str, config: AdapterConfig = AdapterConfig()) -> int:
    """Crop each detected frame, preprocess to the encoder's input, and write
    the embedding store.  Aborts if the encoder's output dimension drifts.
    """
    encoder = make_encoder(config)
    boxes = _load_boxes(Path(detections_path))

    keys: list[tuple[str, int]] = []
    batch: list[np.ndarray] = []
    vectors: list[np.ndarray] = []
    dim: int | None = getattr(encoder, "dim", None)

    def flush():
        nonlocal dim
        if not batch:
            return
        out = encoder(np.stack(batch))
        if dim is None:
            dim = out.shape[1]
        if out.shape[1] != dim:
            raise AdapterError(
                f"encoder dimension drifted mid-run: {out.shape[1]} != {dim}")
        vectors.extend(out)
        batch.clear()

    for video_id, frames in iter_videos(Path(frames_root)):
        video_boxes = boxes.get(video_id, {})
        for frame_index, path in frames:
            box = video_boxes.get(frame_index)
            if box is None:
                continue
            image = _read_frame(path)
            if image is None:
                continue
            crop = crop_image(image, *box, frame=f"{video_id}/{frame_index}")
            keys.append((video_id, frame_index))
            batch.append(_preprocess(crop, config))
            if len(batch) >= config.batch_size:
                flush()
    flush()

    if not keys or dim is None:
        raise AdapterError("no frames matched the detections file; nothing to embed")
    records = [(vid, idx, vec) for (vid, idx), vec in zip(keys, vectors)]
    write_emb(config.encoder_id, dim, records, out_path)
    log.info("embed: %d vectors of dim %d", len(records), dim)
    return len(records)
