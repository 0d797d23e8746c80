"""Cosine-similarity matching of key-frame embeddings against the gallery.

Matching is an exact exhaustive scan: gallery sizes stay small enough that
an approximate index would only blur the semantics.  Frames from the query's
own video are never eligible matches.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import EmbeddingRecord, atomic_write_text
from .store import EmbeddingStore


class MatchError(ValueError):
    pass


class NoEligibleMatchError(MatchError):
    """The gallery holds no labelled record outside the query's video."""


@dataclass(frozen=True)
class MatchResult:
    query_video: str
    query_frame: int
    match_video: str
    match_frame: int
    similarity: float
    predicted_label: str
    true_label: str | None = None

    def __post_init__(self):
        if self.match_video == self.query_video:
            raise MatchError(f"{self.query_video}/{self.query_frame}: matched its own video")
        if not -1.0 <= self.similarity <= 1.0:
            raise MatchError(f"similarity {self.similarity} outside [-1,1]")


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """cos(a, b) = a.b / (|a||b|), clamped to [-1,1] against rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise MatchError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise MatchError("cosine similarity undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _eligible(gallery: EmbeddingStore, exclude_video: str) -> list[EmbeddingRecord]:
    return gallery.filter_by(
        lambda r: r.video_id != exclude_video and r.label is not None)


def best_match(query: EmbeddingRecord, gallery: EmbeddingStore,
               true_label: str | None = None) -> MatchResult:
    """Highest-cosine labelled gallery record outside the query's video.

    Exact similarity ties go to the lexicographically smallest
    (video_id, frame_index).
    """
    candidates = _eligible(gallery, query.video_id)
    if not candidates:
        raise NoEligibleMatchError(
            f"{query.key}: no labelled gallery record outside video {query.video_id!r}")
    matrix = np.stack([r.vector for r in candidates]).astype(np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        raise MatchError("gallery contains a zero vector")
    qnorm = np.linalg.norm(query.vector.astype(np.float64))
    if qnorm == 0.0:
        raise MatchError(f"{query.key}: query vector has zero norm")
    sims = np.clip(matrix @ (query.vector / qnorm) / norms, -1.0, 1.0)
    top = sims.max()
    winner = min((i for i in range(len(candidates)) if sims[i] == top),
                 key=lambda i: (candidates[i].video_id, candidates[i].frame_index))
    rec = candidates[winner]
    return MatchResult(query_video=query.video_id, query_frame=query.frame_index,
                       match_video=rec.video_id, match_frame=rec.frame_index,
                       similarity=float(sims[winner]), predicted_label=rec.label,
                       true_label=true_label)


def match_all(queries: Sequence[EmbeddingRecord], gallery: EmbeddingStore,
              true_labels: Mapping[str, str] | None = None) -> list[MatchResult]:
    labels = true_labels or {}
    return [best_match(q, gallery, true_label=labels.get(q.video_id)) for q in queries]


@dataclass(frozen=True)
class ImageAccuracy:
    overall: float
    per_label: dict[str, float]
    correct: int
    total: int


def image_accuracy(results: Sequence[MatchResult]) -> ImageAccuracy:
    """Fraction of key frames whose predicted label equals the true label,
    overall and grouped by true label."""
    if not results:
        raise MatchError("image_accuracy needs at least one result")
    if any(r.true_label is None for r in results):
        raise MatchError("image_accuracy requires a true label on every result")
    correct_by: dict[str, int] = {}
    total_by: dict[str, int] = {}
    for r in results:
        total_by[r.true_label] = total_by.get(r.true_label, 0) + 1
        if r.predicted_label == r.true_label:
            correct_by[r.true_label] = correct_by.get(r.true_label, 0) + 1
    correct = sum(correct_by.values())
    total = len(results)
    per_label = {lab: correct_by.get(lab, 0) / total_by[lab] for lab in sorted(total_by)}
    return ImageAccuracy(overall=correct / total, per_label=per_label,
                         correct=correct, total=total)


MATCHES_HEADER = ["query_video", "query_frame", "match_video", "match_frame",
                  "similarity", "predicted_label", "true_label"]


def matches_filename(method_name: str) -> str:
    return f"matches_{method_name}.csv"


def save_matches(results: Iterable[MatchResult], path: Path | str) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MATCHES_HEADER)
    for r in sorted(results, key=lambda m: (m.query_video, m.query_frame)):
        writer.writerow([r.query_video, r.query_frame, r.match_video, r.match_frame,
                         repr(r.similarity), r.predicted_label, r.true_label or ""])
    atomic_write_text(path, buf.getvalue())


def load_matches(path: Path | str) -> list[MatchResult]:
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MATCHES_HEADER:
            raise MatchError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            out.append(MatchResult(
                query_video=row["query_video"], query_frame=int(row["query_frame"]),
                match_video=row["match_video"], match_frame=int(row["match_frame"]),
                similarity=float(row["similarity"]),
                predicted_label=row["predicted_label"],
                true_label=row["true_label"] or None))
    return out
