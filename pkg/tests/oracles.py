"""Independent brute-force oracles used by the unit and acceptance suites.

Everything here is written directly from first principles (plain loops,
Pascal's triangle, exhaustive search, per-pixel normal equations) and shares
no code with the implementations it checks.
"""

import itertools
import math

import numpy as np


def silhouette_oracle(points, assignments):
    """Literal per-point silhouette value, averaged."""
    n = len(points)
    dist = [[float(np.linalg.norm(points[i] - points[j])) for j in range(n)]
            for i in range(n)]
    values = []
    for i in range(n):
        own = [j for j in range(n) if assignments[j] == assignments[i] and j != i]
        if not own:
            values.append(0.0)
            continue
        a = sum(dist[i][j] for j in own) / len(own)
        b = min(
            sum(dist[i][j] for j in others) / len(others)
            for c in set(assignments) if c != assignments[i]
            for others in [[j for j in range(n) if assignments[j] == c]]
        )
        values.append((b - a) / max(a, b))
    return sum(values) / n


def binomial_tail_oracle(b, c):
    """Two-sided exact McNemar p via a Pascal-triangle pmf."""
    n = b + c
    if n == 0:
        return 1.0
    row = [1]
    for _ in range(n):
        row = [1] + [row[i] + row[i + 1] for i in range(len(row) - 1)] + [1]
    pmf = [v / 2.0**n for v in row]
    tail = sum(pmf[: min(b, c) + 1])
    return min(1.0, 2.0 * tail)


def adjusted_rand_index(a, b):
    """Contingency-table ARI, written from its definition."""
    a = np.asarray(a)
    b = np.asarray(b)
    classes_a, ca = np.unique(a, return_inverse=True)
    classes_b, cb = np.unique(b, return_inverse=True)
    table = np.zeros((classes_a.size, classes_b.size), dtype=np.int64)
    for i, j in zip(ca, cb):
        table[i, j] += 1

    def comb2(x):
        return x * (x - 1) // 2

    sum_ij = sum(comb2(int(v)) for v in table.flatten())
    sum_a = sum(comb2(int(v)) for v in table.sum(axis=1))
    sum_b = sum(comb2(int(v)) for v in table.sum(axis=0))
    total = comb2(len(a))
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return (sum_ij - expected) / (max_index - expected)


def pam_oracle_best_pair(points):
    """Exhaustive k=2 medoid optimum."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    dist = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    best, best_dev = None, np.inf
    for pair in itertools.combinations(range(n), 2):
        dev = dist[list(pair)].min(axis=0).sum()
        if dev < best_dev:
            best, best_dev = pair, dev
    return set(best), best_dev


def no_single_swap_improves(points, medoids, total_deviation):
    """Check the PAM SWAP fixpoint over every medoid/non-medoid exchange."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    dist = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    med = list(medoids)
    for i in range(len(med)):
        for h in range(n):
            if h in med:
                continue
            trial = med[:i] + [h] + med[i + 1:]
            if dist[trial].min(axis=0).sum() < total_deviation - 1e-9:
                return False
    return True


def expansion_oracle(image, poly_n, poly_sigma):
    """Per-pixel Gaussian-weighted least squares via explicit normal equations."""
    radius = (poly_n - 1) // 2
    offsets = [(du, dv) for dv in range(-radius, radius + 1)
               for du in range(-radius, radius + 1)]
    weights = np.array([math.exp(-(du * du + dv * dv) / (2 * poly_sigma ** 2))
                        for du, dv in offsets])
    phi = np.array([[1.0, du, dv, du * du, dv * dv, du * dv] for du, dv in offsets])
    h, w = image.shape
    a = np.full((h, w, 2, 2), np.nan)
    b = np.full((h, w, 2), np.nan)
    c = np.full((h, w), np.nan)
    for y in range(radius, h - radius):
        for x in range(radius, w - radius):
            f = np.array([image[y + dv, x + du] for du, dv in offsets])
            lhs = phi.T @ (phi * weights[:, None])
            rhs = phi.T @ (weights * f)
            theta = np.linalg.solve(lhs, rhs)
            c[y, x] = theta[0]
            b[y, x] = theta[1:3]
            a[y, x] = [[theta[3], theta[5] / 2], [theta[5] / 2, theta[4]]]
    return a, b, c
