"""Nonlinear dimensionality reduction via fuzzy simplicial sets.

Standard UMAP on small point sets: exact Euclidean kNN graph, smooth-kNN
distance calibration, fuzzy union symmetrization a + b - ab, PCA
initialization scaled to the layout range, and a seeded stochastic gradient
layout.  Deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy.optimize import curve_fit

SMOOTH_K_TOLERANCE = 1e-5
MIN_K_DIST_SCALE = 1e-3


class UmapError(ValueError):
    pass


@dataclass(frozen=True)
class UmapParams:
    n_components: int = 5
    min_dist: float = 0.0
    n_neighbors: int = 15          # effective value is min(n_neighbors, point count)
    init: str = "pca"              # layout initialized from the top principal components
    seed: int = 42
    spread: float = 1.0
    n_epochs: int = 500
    negative_sample_rate: int = 5
    learning_rate: float = 1.0     # linearly decayed to 0 over the epochs

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be positive")
        if self.n_neighbors < 2:
            raise ValueError("n_neighbors must be at least 2")
        if self.init != "pca":
            raise ValueError(f"unsupported init {self.init!r}; only 'pca' is implemented")
        if self.min_dist < 0 or self.spread <= 0:
            raise ValueError("min_dist must be >= 0 and spread > 0")
        if self.n_epochs < 1 or self.negative_sample_rate < 1:
            raise ValueError("n_epochs and negative_sample_rate must be positive")


def pca(points: np.ndarray, components: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean-centered projection onto the top principal components.

    Returns (projected n x c, basis c x d).  Components are ordered by
    descending eigenvalue; each basis vector is oriented so its
    largest-magnitude loading is positive.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("pca expects an n x d matrix")
    n, d = x.shape
    if n < 2:
        raise ValueError("pca needs at least 2 points")
    if not 1 <= components <= min(n - 1, d):
        raise ValueError(f"components must lie in [1, {min(n - 1, d)}], got {components}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:components]
    basis = eigvecs[:, order].T
    for i in range(basis.shape[0]):
        j = np.argmax(np.abs(basis[i]))
        if basis[i, j] < 0:
            basis[i] = -basis[i]
    return centered @ basis.T, basis


@lru_cache(maxsize=8)
def fit_curve_params(min_dist: float, spread: float) -> tuple[float, float]:
    """Fit (a, b) of the low-dimensional similarity curve 1/(1 + a x^(2b))
    to the offset exponential with the given min_dist and spread."""
    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2 * b))

    xv = np.linspace(0, spread * 3, 300)
    yv = np.zeros(xv.shape)
    yv[xv < min_dist] = 1.0
    yv[xv >= min_dist] = np.exp(-(xv[xv >= min_dist] - min_dist) / spread)
    params, _ = curve_fit(curve, xv, yv)
    return float(params[0]), float(params[1])


def _exact_knn(x: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and distances of the k nearest points (self included)."""
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    dists = np.sqrt(np.take_along_axis(d2, order, axis=1))
    return order, dists


def _smooth_knn_dist(distances: np.ndarray, k: float, n_iter: int = 64
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Per-point (sigma, rho) so that the fuzzy set cardinality matches log2(k)."""
    target = np.log2(k)
    n = distances.shape[0]
    rho = np.zeros(n)
    sigma = np.zeros(n)
    mean_all = distances.mean()
    for i in range(n):
        row = distances[i]
        nonzero = row[row > 0.0]
        if nonzero.size >= 1:
            rho[i] = nonzero[0]
        lo, hi, mid = 0.0, np.inf, 1.0
        for _ in range(n_iter):
            psum = 0.0
            for j in range(1, row.shape[0]):
                d = row[j] - rho[i]
                psum += np.exp(-(d / mid)) if d > 0 else 1.0
            if abs(psum - target) < SMOOTH_K_TOLERANCE:
                break
            if psum > target:
                hi = mid
                mid = (lo + hi) / 2.0
            else:
                lo = mid
                mid = mid * 2 if hi == np.inf else (lo + hi) / 2.0
        sigma[i] = mid
        if rho[i] > 0.0:
            sigma[i] = max(sigma[i], MIN_K_DIST_SCALE * row.mean())
        else:
            sigma[i] = max(sigma[i], MIN_K_DIST_SCALE * mean_all)
    return sigma, rho


def _fuzzy_graph(x: np.ndarray, n_neighbors: int) -> np.ndarray:
    knn_idx, knn_dist = _exact_knn(x, n_neighbors)
    sigma, rho = _smooth_knn_dist(knn_dist, float(n_neighbors))
    n = x.shape[0]
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(knn_idx.shape[1]):
            col = knn_idx[i, j]
            if col == i:
                continue
            d = knn_dist[i, j] - rho[i]
            w[i, col] = 1.0 if (d <= 0.0 or sigma[i] == 0.0) else np.exp(-d / sigma[i])
    return w + w.T - w * w.T


@numba.njit(inline="always")
def _tau_rand_int(state):
    # taus88 generator; deterministic and fast inside the layout loop.
    state[0] = (((state[0] & 4294967294) << 12) & 0xFFFFFFFF) ^ (
        (((state[0] << 13) & 0xFFFFFFFF) ^ state[0]) >> 19)
    state[1] = (((state[1] & 4294967288) << 4) & 0xFFFFFFFF) ^ (
        (((state[1] << 2) & 0xFFFFFFFF) ^ state[1]) >> 25)
    state[2] = (((state[2] & 4294967280) << 17) & 0xFFFFFFFF) ^ (
        (((state[2] << 3) & 0xFFFFFFFF) ^ state[2]) >> 11)
    return state[0] ^ state[1] ^ state[2]


@numba.njit(cache=True)
def _optimize_layout(embedding, head, tail, n_epochs, epochs_per_sample,
                     a, b, rng_state, gamma, initial_alpha, negative_sample_rate):
    dim = embedding.shape[1]
    n_vertices = embedding.shape[0]
    alpha = initial_alpha
    epochs_per_negative_sample = epochs_per_sample / negative_sample_rate
    epoch_of_next_negative_sample = epochs_per_negative_sample.copy()
    epoch_of_next_sample = epochs_per_sample.copy()

    for n in range(n_epochs):
        for i in range(epochs_per_sample.shape[0]):
            if epoch_of_next_sample[i] <= n:
                j = head[i]
                k = tail[i]
                current = embedding[j]
                other = embedding[k]

                dist_squared = 0.0
                for d in range(dim):
                    diff = current[d] - other[d]
                    dist_squared += diff * diff

                if dist_squared > 0.0:
                    grad_coeff = -2.0 * a * b * dist_squared ** (b - 1.0)
                    grad_coeff /= a * dist_squared ** b + 1.0
                else:
                    grad_coeff = 0.0

                for d in range(dim):
                    grad_d = grad_coeff * (current[d] - other[d])
                    if grad_d > 4.0:
                        grad_d = 4.0
                    elif grad_d < -4.0:
                        grad_d = -4.0
                    current[d] += grad_d * alpha
                    other[d] += -grad_d * alpha

                epoch_of_next_sample[i] += epochs_per_sample[i]

                n_neg_samples = int((n - epoch_of_next_negative_sample[i])
                                    / epochs_per_negative_sample[i])
                for _ in range(n_neg_samples):
                    k = _tau_rand_int(rng_state) % n_vertices
                    other = embedding[k]

                    dist_squared = 0.0
                    for d in range(dim):
                        diff = current[d] - other[d]
                        dist_squared += diff * diff

                    if dist_squared > 0.0:
                        grad_coeff = 2.0 * gamma * b
                        grad_coeff /= (0.001 + dist_squared) * (a * dist_squared ** b + 1)
                    elif j == k:
                        continue
                    else:
                        grad_coeff = 0.0

                    for d in range(dim):
                        if grad_coeff > 0.0:
                            grad_d = grad_coeff * (current[d] - other[d])
                            if grad_d > 4.0:
                                grad_d = 4.0
                            elif grad_d < -4.0:
                                grad_d = -4.0
                        else:
                            grad_d = 4.0
                        current[d] += grad_d * alpha

                epoch_of_next_negative_sample[i] += (
                    n_neg_samples * epochs_per_negative_sample[i])

        alpha = initial_alpha * (1.0 - float(n) / float(n_epochs))

    return embedding


def umap_reduce(points: np.ndarray, params: UmapParams = UmapParams()) -> np.ndarray:
    """Embed ``points`` (n x D) into ``params.n_components`` dimensions.

    Requires n > n_components (the reduced basis must have full rank) and
    D >= n_components for the PCA initialization.
    """
    x = np.ascontiguousarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise UmapError("umap_reduce expects an n x D matrix")
    n, d = x.shape
    if n <= params.n_components:
        raise UmapError(
            f"need more than {params.n_components} points to reduce, got {n}")
    if d < params.n_components:
        raise UmapError(f"input dimension {d} below n_components {params.n_components}")
    if not np.all(np.isfinite(x)):
        raise UmapError("input contains non-finite values")

    rng = np.random.default_rng(params.seed)
    n_neighbors = min(params.n_neighbors, n)
    graph = _fuzzy_graph(x, n_neighbors)

    init, _ = pca(x, params.n_components)
    max_abs = np.abs(init).max()
    if max_abs > 0:
        init = init * (10.0 / max_abs)
    init = init + rng.normal(scale=1e-4, size=init.shape)
    span = init.max(axis=0) - init.min(axis=0)
    span[span == 0] = 1.0
    embedding = (10.0 * (init - init.min(axis=0)) / span).astype(np.float32, order="C")

    # Drop edges too weak to ever be sampled, then build the epoch schedule.
    weights = graph.copy()
    weights[weights < weights.max() / float(params.n_epochs)] = 0.0
    head, tail = np.nonzero(weights)
    vals = weights[head, tail]
    epochs_per_sample = np.full(vals.shape[0], -1.0)
    n_samples = params.n_epochs * (vals / vals.max())
    epochs_per_sample[n_samples > 0] = float(params.n_epochs) / n_samples[n_samples > 0]

    a, b = fit_curve_params(params.min_dist, params.spread)
    rng_state = rng.integers(16, 2**31 - 1, size=3).astype(np.int64)
    embedding = _optimize_layout(
        embedding, head.astype(np.int64), tail.astype(np.int64),
        params.n_epochs, epochs_per_sample, a, b, rng_state,
        1.0, params.learning_rate, float(params.negative_sample_rate))
    return np.asarray(embedding, dtype=np.float32)
