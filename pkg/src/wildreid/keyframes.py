"""Key-frame selection: cluster candidate-frame embeddings (optionally after
UMAP reduction), pick k by silhouette over a bounded range, and emit one
representative frame per cluster.  Random baselines select 5 or 7 frames.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import atomic_write_text
from .umap import UmapParams, pca, umap_reduce

__all__ = [
    "SelectionKind", "SelectionMethod", "KeyFrameSet", "KMeansResult",
    "KMedoidsResult", "pca", "kmeans", "kmedoids", "silhouette_score",
    "select_keyframes", "save_keyframe_sets", "load_keyframe_sets",
    "keyframes_filename",
]

DEFAULT_K_MIN = 5
DEFAULT_K_MAX = 20


class SelectionKind(Enum):
    KMEANS = "kmeans"
    KMEDOIDS = "kmedoids"
    KMEANS_UMAP = "kmeans_umap"
    KMEDOIDS_UMAP = "kmedoids_umap"
    RANDOM5 = "random5"
    RANDOM7 = "random7"

    @property
    def uses_umap(self) -> bool:
        return self in (SelectionKind.KMEANS_UMAP, SelectionKind.KMEDOIDS_UMAP)

    @property
    def is_random(self) -> bool:
        return self in (SelectionKind.RANDOM5, SelectionKind.RANDOM7)

    @property
    def random_count(self) -> int:
        return {SelectionKind.RANDOM5: 5, SelectionKind.RANDOM7: 7}[self]


@dataclass(frozen=True)
class SelectionMethod:
    kind: SelectionKind
    seed: int = 0

    @property
    def name(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class KeyFrameSet:
    video_id: str
    method: SelectionMethod
    key_frame_indices: tuple[int, ...]
    k_chosen: int | None = None
    silhouette: float | None = None

    def __post_init__(self):
        if len(set(self.key_frame_indices)) != len(self.key_frame_indices):
            raise ValueError(f"{self.video_id}: duplicate key frame indices")
        if self.silhouette is not None and not -1.0 <= self.silhouette <= 1.0 + 1e-12:
            raise ValueError(f"{self.video_id}: silhouette {self.silhouette} outside [-1,1]")


@dataclass(frozen=True)
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_history: tuple[float, ...]
    n_iter: int


@dataclass(frozen=True)
class KMedoidsResult:
    medoid_indices: tuple[int, ...]
    assignments: np.ndarray
    total_deviation: float


def _as_points(points: np.ndarray) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("expected a non-empty n x d matrix")
    return x


def kmeans(points: np.ndarray, k: int, seed: int = 0) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding.

    Runs to an assignment fixpoint or 300 iterations; an emptied cluster is
    repaired by claiming the point currently farthest from its centroid.
    """
    x = _as_points(points)
    n = x.shape[0]
    if not 2 <= k <= n:
        raise ValueError(f"k must lie in [2, {n}], got {k}")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    closest_sq = np.sum((x - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest_sq.sum()
        if total <= 0:
            centroids[i] = x[rng.integers(n)]
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest_sq), r, side="right"))
            idx = min(idx, n - 1)
            centroids[i] = x[idx]
        closest_sq = np.minimum(closest_sq, np.sum((x - centroids[i]) ** 2, axis=1))

    assignments = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    for _ in range(300):
        d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(d2, axis=1)

        counts = np.bincount(new_assign, minlength=k)
        for j in range(k):
            if counts[j] == 0:
                # Claim the point farthest from its centroid, but never a
                # cluster's sole member (that would just move the hole).
                dist_own = d2[np.arange(n), new_assign].copy()
                dist_own[counts[new_assign] <= 1] = -1.0
                loner = int(np.argmax(dist_own))
                counts[new_assign[loner]] -= 1
                counts[j] += 1
                new_assign[loner] = j

        converged = np.array_equal(new_assign, assignments)
        assignments = new_assign
        for j in range(k):
            centroids[j] = x[assignments == j].mean(axis=0)

        # Measured after the centroid update so the sequence is provably
        # non-increasing even across empty-cluster repairs.
        inertia = float(((x - centroids[assignments]) ** 2).sum())
        assert not history or inertia <= history[-1] + 1e-9, "inertia increased"
        history.append(inertia)
        if converged:
            break

    return KMeansResult(assignments=assignments, centroids=centroids,
                        inertia=history[-1], inertia_history=tuple(history),
                        n_iter=len(history))


def kmedoids(points: np.ndarray, k: int, seed: int = 0) -> KMedoidsResult:
    """Partitioning around medoids: greedy BUILD, then best-improvement SWAP
    until no single medoid/non-medoid exchange lowers the total deviation.

    Deterministic given the input order; ``seed`` is accepted for interface
    symmetry but the algorithm has no random component.
    """
    x = _as_points(points)
    n = x.shape[0]
    if not 2 <= k <= n:
        raise ValueError(f"k must lie in [2, {n}], got {k}")
    del seed
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))

    # BUILD: start from the 1-medoid optimum, then greedily add.
    medoids = [int(np.argmin(dist.sum(axis=1)))]
    nearest = dist[medoids[0]].copy()
    while len(medoids) < k:
        gains = np.maximum(nearest[None, :] - dist, 0.0).sum(axis=1)
        gains[medoids] = -1.0
        candidate = int(np.argmax(gains))
        medoids.append(candidate)
        nearest = np.minimum(nearest, dist[candidate])

    def deviation(meds: list[int]) -> float:
        return float(dist[meds].min(axis=0).sum())

    best = deviation(medoids)
    improved = True
    while improved:
        improved = False
        best_swap: tuple[int, int] | None = None
        best_dev = best
        med_set = set(medoids)
        for mi, m in enumerate(medoids):
            others = [p for p in medoids if p != m]
            base = dist[others].min(axis=0) if others else np.full(n, np.inf)
            for h in range(n):
                if h in med_set:
                    continue
                dev = float(np.minimum(base, dist[h]).sum())
                if dev < best_dev - 1e-12:
                    best_dev = dev
                    best_swap = (mi, h)
        if best_swap is not None:
            medoids[best_swap[0]] = best_swap[1]
            best = best_dev
            improved = True

    med_arr = np.array(sorted(medoids))
    assignments = np.argmin(dist[med_arr], axis=0)
    return KMedoidsResult(medoid_indices=tuple(int(m) for m in med_arr),
                          assignments=assignments,
                          total_deviation=float(dist[med_arr].min(axis=0).sum()))


def silhouette_score(points: np.ndarray, assignments: np.ndarray) -> float:
    """Mean silhouette value over all points.

    s(i) = (b(i) - a(i)) / max(a(i), b(i)) with a(i) the mean intra-cluster
    distance (self excluded) and b(i) the lowest mean distance to another
    cluster; points in singleton clusters contribute 0.
    """
    x = _as_points(points)
    labels = np.asarray(assignments)
    n = x.shape[0]
    if labels.shape != (n,):
        raise ValueError("assignments must have one entry per point")
    if n < 3:
        raise ValueError("silhouette needs at least 3 points")
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise ValueError("silhouette needs at least 2 non-empty clusters")

    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    sizes = {c: int((labels == c).sum()) for c in uniq}
    mean_to_cluster = np.stack([dist[:, labels == c].mean(axis=1) for c in uniq], axis=1)
    col_of = {c: i for i, c in enumerate(uniq)}

    s = np.zeros(n)
    for i in range(n):
        c = labels[i]
        size = sizes[c]
        if size == 1:
            continue
        a = mean_to_cluster[i, col_of[c]] * size / (size - 1)  # exclude self
        b = min(mean_to_cluster[i, col_of[o]] for o in uniq if o != c)
        denom = max(a, b)
        if denom > 0:
            s[i] = (b - a) / denom
    return float(s.mean())


def method_rng_seed(video_id: str, seed: int) -> int:
    """Stable per-video seed so random baselines differ across videos but
    reproduce across runs and platforms."""
    digest = hashlib.blake2b(f"{video_id}:{seed}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def select_keyframes(video_id: str,
                     frame_indices: Sequence[int],
                     vectors: np.ndarray,
                     method: SelectionMethod,
                     umap_params: UmapParams = UmapParams(),
                     k_min: int = DEFAULT_K_MIN,
                     k_max: int = DEFAULT_K_MAX) -> KeyFrameSet:
    """Choose the key frames of one video from its candidate-frame embeddings.

    Videos with at most ``k_min`` candidates pass all candidates through for
    every method.  Clustering methods sweep k over [k_min, min(k_max, n-1)]
    and keep the argmax-silhouette clustering (ties prefer the smallest k);
    the representative of a k-means cluster is the frame nearest its centroid
    (ties prefer the lowest frame index), of a k-medoids cluster the medoid.
    """
    order = np.argsort(frame_indices, kind="stable")
    frame_indices = [int(frame_indices[i]) for i in order]
    x = _as_points(np.asarray(vectors)[order])
    n = x.shape[0]
    if len(frame_indices) != n:
        raise ValueError("frame_indices and vectors disagree in length")
    if len(set(frame_indices)) != n:
        raise ValueError(f"{video_id}: duplicate candidate frame indices")

    if n <= k_min:
        return KeyFrameSet(video_id=video_id, method=method,
                           key_frame_indices=tuple(frame_indices))

    if method.kind.is_random:
        rng = np.random.default_rng(method_rng_seed(video_id, method.seed))
        count = min(method.kind.random_count, n)
        chosen = rng.choice(n, size=count, replace=False)
        picks = sorted(frame_indices[i] for i in chosen)
        return KeyFrameSet(video_id=video_id, method=method,
                           key_frame_indices=tuple(picks))

    working = umap_reduce(x, umap_params) if method.kind.uses_umap else x
    working = np.asarray(working, dtype=np.float64)

    use_medoids = method.kind in (SelectionKind.KMEDOIDS, SelectionKind.KMEDOIDS_UMAP)
    best_k = None
    best_score = -np.inf
    best_result = None
    for k in range(k_min, min(k_max, n - 1) + 1):
        result = kmedoids(working, k, method.seed) if use_medoids \
            else kmeans(working, k, method.seed)
        score = silhouette_score(working, result.assignments)
        if score > best_score:
            best_k, best_score, best_result = k, score, result

    if use_medoids:
        picks = sorted(frame_indices[i] for i in best_result.medoid_indices)
    else:
        picks = []
        for j in range(best_k):
            members = np.nonzero(best_result.assignments == j)[0]
            d = np.linalg.norm(working[members] - best_result.centroids[j], axis=1)
            picks.append(frame_indices[members[int(np.argmin(d))]])
        picks.sort()
    return KeyFrameSet(video_id=video_id, method=method,
                       key_frame_indices=tuple(picks),
                       k_chosen=best_k, silhouette=float(best_score))


def keyframes_filename(method: SelectionMethod) -> str:
    return f"keyframes_{method.name}.jsonl"


def save_keyframe_sets(sets: Iterable[KeyFrameSet], path: Path | str) -> None:
    lines = []
    for kfs in sorted(sets, key=lambda s: s.video_id):
        lines.append(json.dumps({
            "video_id": kfs.video_id,
            "method": kfs.method.name,
            "seed": kfs.method.seed,
            "k_chosen": kfs.k_chosen,
            "silhouette": kfs.silhouette,
            "frame_indices": list(kfs.key_frame_indices),
        }, sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def load_keyframe_sets(path: Path | str) -> list[KeyFrameSet]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            method = SelectionMethod(kind=SelectionKind(row["method"]), seed=row["seed"])
            out.append(KeyFrameSet(
                video_id=row["video_id"], method=method,
                key_frame_indices=tuple(row["frame_indices"]),
                k_chosen=row["k_chosen"], silhouette=row["silhouette"]))
    return out
