"""Writers for the wildreid interchange formats.

Implemented independently from the consumer package against the same format
contracts; the conformance tests check the emitted bytes parse cleanly there.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

EMB_MAGIC = b"EMB1"
EMB_VERSION = 1


def atomic_write(path: Path | str, data: bytes) -> None:
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


def write_detections(rows: Iterable[dict], path: Path | str) -> None:
    """rows: {video_id, frame_index, bbox:[cx,cy,w,h], confidence, class}."""
    lines = [json.dumps(row, sort_keys=True) for row in rows]
    atomic_write(path, ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8"))


def _pack_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError(f"string too long for u16 length prefix: {len(raw)}")
    return struct.pack("<H", len(raw)) + raw


def write_emb(encoder_id: str, dim: int,
              records: Sequence[tuple[str, int, np.ndarray]],
              path: Path | str) -> None:
    """records: (video_id, frame_index, vector) triples, unlabelled."""
    parts = [EMB_MAGIC,
             struct.pack("<B3x", EMB_VERSION),
             struct.pack("<I", dim),
             struct.pack("<Q", len(records)),
             _pack_str(encoder_id)]
    for video_id, frame_index, vector in records:
        vec = np.ascontiguousarray(vector, dtype="<f4")
        if vec.shape != (dim,):
            raise ValueError(f"{video_id}/{frame_index}: vector dim {vec.shape} != {dim}")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"{video_id}/{frame_index}: non-finite vector")
        parts.append(_pack_str(f"{video_id}/{frame_index}"))
        parts.append(b"\x00")  # label absent; labels are attached downstream
        parts.append(vec.tobytes())
    atomic_write(path, b"".join(parts))
