"""Dense optical flow between consecutive frames and the per-video blur filter.

The flow estimator follows the classic polynomial-expansion scheme: each
image neighbourhood is approximated by a quadratic f(x) ~ x'Ax + b'x + c
fitted by Gaussian-weighted least squares, and the displacement field is
solved from the coefficient relation A d = (b1 - b2)/2, averaged over a
Gaussian window for robustness, inside a coarse-to-fine image pyramid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import ndimage

from .core import FrameRecord, FrameStatus, atomic_write_text

log = logging.getLogger(__name__)

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


class FlowError(ValueError):
    """Flow cannot be computed for the given inputs."""


@dataclass(frozen=True)
class FlowParams:
    pyramid_scale: float = 0.5
    levels: int = 3
    window_size: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.1

    def __post_init__(self):
        if not 0.0 < self.pyramid_scale < 1.0:
            raise ValueError("pyramid_scale must lie in (0,1)")
        if self.levels < 1:
            raise ValueError("levels must be positive")
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ValueError("window_size must be odd and positive")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.poly_n < 3 or self.poly_n % 2 == 0:
            raise ValueError("poly_n must be an odd integer >= 3")
        if self.poly_sigma <= 0:
            raise ValueError("poly_sigma must be positive")


@dataclass(frozen=True)
class FlowField:
    dx: np.ndarray  # horizontal displacement, pixels/frame
    dy: np.ndarray  # vertical displacement, pixels/frame

    def __post_init__(self):
        if self.dx.shape != self.dy.shape or self.dx.ndim != 2:
            raise FlowError("dx/dy must be 2-D grids of identical shape")
        if not (np.all(np.isfinite(self.dx)) and np.all(np.isfinite(self.dy))):
            raise FlowError("flow field contains non-finite values")

    @property
    def width(self) -> int:
        return self.dx.shape[1]

    @property
    def height(self) -> int:
        return self.dx.shape[0]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.dx, self.dy)


def to_gray(image: np.ndarray) -> np.ndarray:
    """Luminance transform Y = 0.299R + 0.587G + 0.114B, scaled to [0,1]."""
    arr = np.asarray(image)
    if arr.ndim == 3:
        if arr.shape[2] < 3:
            arr = arr[:, :, 0]
        else:
            r, g, b = (arr[:, :, i].astype(np.float64) for i in range(3))
            arr = GRAY_WEIGHTS[0] * r + GRAY_WEIGHTS[1] * g + GRAY_WEIGHTS[2] * b
    arr = arr.astype(np.float64)
    if np.issubdtype(np.asarray(image).dtype, np.integer):
        arr /= 255.0
    return arr


def _gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    u = np.arange(-radius, radius + 1, dtype=np.float64)
    return np.exp(-(u * u) / (2.0 * sigma * sigma))


# Basis exponents for [1, u, v, u^2, v^2, uv]; u is the x offset, v the y offset.
_BASIS = ((0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1))


def polynomial_expansion(image: np.ndarray, poly_n: int, poly_sigma: float
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pixel quadratic fit of the image surface.

    Returns (A, b, c) with shapes (H,W,2,2), (H,W,2), (H,W): the Gaussian
    weighted least-squares fit of f(p+d) ~ d'Ad + b'd + c over a window of
    radius (poly_n-1)/2 and std poly_sigma.  Borders are handled by edge
    replication; coefficients at pixels at least a radius away from the
    border are the exact windowed fit.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise FlowError("polynomial expansion expects a single-channel image")
    h, w = img.shape
    if h < poly_n or w < poly_n:
        raise FlowError(f"image {w}x{h} smaller than poly_n={poly_n}")
    radius = (poly_n - 1) // 2
    g = _gaussian_kernel(poly_sigma, radius)
    u = np.arange(-radius, radius + 1, dtype=np.float64)
    kernels = {q: g * u**q for q in range(3)}

    # Gram matrix of the weighted basis; constant across pixels.
    offs = [(du, dv) for dv in u for du in u]
    wts = np.array([g[int(du) + radius] * g[int(dv) + radius] for du, dv in offs])
    phi = np.array([[du**p * dv**q for (p, q) in _BASIS] for du, dv in offs])
    gram = phi.T @ (phi * wts[:, None])
    gram_inv = np.linalg.inv(gram)

    # Weighted moments from separable correlations: m_pq = sum w * u^p v^q * f.
    moments = np.empty((6, h, w))
    for i, (p, q) in enumerate(_BASIS):
        tmp = ndimage.correlate1d(img, kernels[q], axis=0, mode="nearest")
        moments[i] = ndimage.correlate1d(tmp, kernels[p], axis=1, mode="nearest")

    theta = np.einsum("ij,jhw->ihw", gram_inv, moments)
    c = theta[0]
    b = np.stack([theta[1], theta[2]], axis=-1)
    a = np.empty((h, w, 2, 2))
    a[..., 0, 0] = theta[3]
    a[..., 1, 1] = theta[4]
    a[..., 0, 1] = a[..., 1, 0] = theta[5] / 2.0
    return a, b, c


def _resize_bilinear(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h2, w2 = shape
    h, w = img.shape
    if (h, w) == (h2, w2):
        return img.copy()
    ys = (np.arange(h2) + 0.5) * (h / h2) - 0.5
    xs = (np.arange(w2) + 0.5) * (w / w2) - 0.5
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - fx) + img[np.ix_(y0, x1)] * fx
    bot = img[np.ix_(y1, x0)] * (1 - fx) + img[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


class _BilinearSampler:
    """Samples several fields at one set of fractional coordinates, computing
    the interpolation weights only once."""

    def __init__(self, shape: tuple[int, int], ys: np.ndarray, xs: np.ndarray):
        h, w = shape
        ys = np.clip(ys, 0, h - 1)
        xs = np.clip(xs, 0, w - 1)
        self.y0 = np.floor(ys).astype(int)
        self.x0 = np.floor(xs).astype(int)
        self.y1 = np.minimum(self.y0 + 1, h - 1)
        self.x1 = np.minimum(self.x0 + 1, w - 1)
        fy = ys - self.y0
        fx = xs - self.x0
        self.w00 = (1 - fy) * (1 - fx)
        self.w01 = (1 - fy) * fx
        self.w10 = fy * (1 - fx)
        self.w11 = fy * fx

    def sample(self, field: np.ndarray) -> np.ndarray:
        return (field[self.y0, self.x0] * self.w00
                + field[self.y0, self.x1] * self.w01
                + field[self.y1, self.x0] * self.w10
                + field[self.y1, self.x1] * self.w11)


def _sample_bilinear(field: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    return _BilinearSampler(field.shape, ys, xs).sample(field)


def _pyramid(img: np.ndarray, params: FlowParams) -> list[np.ndarray]:
    """Finest-first list of smoothed, downscaled images."""
    levels = [img]
    smooth_sigma = 0.5 / params.pyramid_scale
    for _ in range(1, params.levels):
        prev = levels[-1]
        h2 = int(round(prev.shape[0] * params.pyramid_scale))
        w2 = int(round(prev.shape[1] * params.pyramid_scale))
        if min(h2, w2) < max(params.poly_n, 5):
            break
        blurred = ndimage.gaussian_filter(prev, smooth_sigma, mode="nearest")
        levels.append(_resize_bilinear(blurred, (h2, w2)))
    return levels


class _PreparedFrame:
    """Image pyramid plus per-level polynomial expansions, reusable across
    the two flow computations a middle frame takes part in."""

    def __init__(self, image: np.ndarray, params: FlowParams):
        image = np.asarray(image, dtype=np.float64)
        if image.ndim != 2:
            raise FlowError("flow expects single-channel images")
        h, w = image.shape
        if h < params.window_size or w < params.window_size:
            raise FlowError(
                f"image {w}x{h} smaller than window_size={params.window_size}")
        self.shape = image.shape
        self.pyramid = _pyramid(image, params)
        self.expansions = [polynomial_expansion(p, params.poly_n, params.poly_sigma)
                           for p in self.pyramid]


def farneback_flow(prev: np.ndarray, nxt: np.ndarray,
                   params: FlowParams = FlowParams()) -> FlowField:
    """Dense displacement field mapping ``prev`` pixels onto ``nxt``."""
    return _flow_between(_PreparedFrame(prev, params),
                         _PreparedFrame(nxt, params), params)


def _flow_between(prev: _PreparedFrame, nxt: _PreparedFrame,
                  params: FlowParams) -> FlowField:
    if prev.shape != nxt.shape:
        raise FlowError(f"frame dimension mismatch: {prev.shape} vs {nxt.shape}")

    win_radius = (params.window_size - 1) // 2
    win = _gaussian_kernel((params.window_size - 1) / 4.0 or 1.0, win_radius)
    win /= win.sum()

    def window_smooth(field: np.ndarray) -> np.ndarray:
        tmp = ndimage.correlate1d(field, win, axis=0, mode="nearest")
        return ndimage.correlate1d(tmp, win, axis=1, mode="nearest")

    dx = dy = None
    for level in range(len(prev.pyramid) - 1, -1, -1):
        lh, lw = prev.pyramid[level].shape
        if dx is None:
            dx = np.zeros((lh, lw))
            dy = np.zeros((lh, lw))
        else:
            scale_y = lh / dx.shape[0]
            scale_x = lw / dx.shape[1]
            dx = _resize_bilinear(dx, (lh, lw)) * scale_x
            dy = _resize_bilinear(dy, (lh, lw)) * scale_y

        a1, b1, _ = prev.expansions[level]
        a2, b2, _ = nxt.expansions[level]
        grid_y, grid_x = np.mgrid[0:lh, 0:lw].astype(np.float64)

        for _ in range(params.iterations):
            warp = _BilinearSampler((lh, lw), grid_y + dy, grid_x + dx)
            a2w = np.empty_like(a1)
            a2w[..., 0, 0] = warp.sample(a2[..., 0, 0])
            a2w[..., 0, 1] = a2w[..., 1, 0] = warp.sample(a2[..., 0, 1])
            a2w[..., 1, 1] = warp.sample(a2[..., 1, 1])
            b2w = np.empty_like(b1)
            b2w[..., 0] = warp.sample(b2[..., 0])
            b2w[..., 1] = warp.sample(b2[..., 1])

            a_mid = 0.5 * (a1 + a2w)
            db_x = 0.5 * (b1[..., 0] - b2w[..., 0]) + a_mid[..., 0, 0] * dx + a_mid[..., 0, 1] * dy
            db_y = 0.5 * (b1[..., 1] - b2w[..., 1]) + a_mid[..., 1, 0] * dx + a_mid[..., 1, 1] * dy

            # Normal equations G d = h accumulated over the window (A symmetric).
            a11, a12, a22 = a_mid[..., 0, 0], a_mid[..., 0, 1], a_mid[..., 1, 1]
            g11 = window_smooth(a11 * a11 + a12 * a12)
            g12 = window_smooth(a11 * a12 + a12 * a22)
            g22 = window_smooth(a12 * a12 + a22 * a22)
            h1 = window_smooth(a11 * db_x + a12 * db_y)
            h2 = window_smooth(a12 * db_x + a22 * db_y)

            reg = 1e-9 * (g11 + g22) + 1e-30
            g11r = g11 + reg
            g22r = g22 + reg
            det = g11r * g22r - g12 * g12
            dx = (g22r * h1 - g12 * h2) / det
            dy = (g11r * h2 - g12 * h1) / det

    return FlowField(dx=dx, dy=dy)


def motion_scores(frames: Iterable[np.ndarray],
                  params: FlowParams = FlowParams()) -> list[float]:
    """Mean flow magnitude of each frame relative to its predecessor.

    score[0] is 0 by convention (the first frame has no predecessor).
    Frames must already be grayscale in [0,1] (see :func:`to_gray`).
    """
    scores: list[float] = []
    prev: _PreparedFrame | None = None
    for index, frame in enumerate(frames):
        try:
            current = _PreparedFrame(frame, params)
            if prev is None:
                scores.append(0.0)
            else:
                scores.append(float(_flow_between(prev, current, params)
                                    .magnitude().mean()))
        except FlowError as exc:
            raise FlowError(f"frame {index}: {exc}") from exc
        prev = current
    if not scores:
        raise FlowError("motion_scores needs at least one frame")
    return scores


def blur_filter(frames: Sequence[FrameRecord], fraction: float = 0.2
                ) -> tuple[list[FrameRecord], list[FrameRecord]]:
    """Partition one video's DETECTED frames into candidates and high-motion discards.

    Exactly ceil(fraction * n) frames with the highest motion scores are
    discarded; score ties discard the higher frame_index first.  Returns
    (candidates, discarded), each sorted by frame_index.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must lie in [0,1)")
    records = list(frames)
    if not records:
        return [], []
    videos = {r.video_id for r in records}
    if len(videos) > 1:
        raise ValueError(f"blur_filter expects frames of one video, got {sorted(videos)}")
    for r in records:
        if r.status is not FrameStatus.DETECTED or r.motion_score is None:
            raise ValueError(f"{r.video_id}/{r.frame_index}: expected DETECTED with a motion score")

    n = len(records)
    # The 1e-9 guard keeps ceil exact where fraction*n is an integer that
    # floating point nudges upward (e.g. 0.2*15 -> 3.0000000000000004).
    n_discard = min(n, max(0, math.ceil(fraction * n - 1e-9)))
    by_severity = sorted(records, key=lambda r: (-r.motion_score, -r.frame_index))
    discarded = sorted((r.advance(FrameStatus.DISCARDED_HIGH_MOTION)
                        for r in by_severity[:n_discard]),
                       key=lambda r: r.frame_index)
    retained = sorted((r.advance(FrameStatus.CANDIDATE)
                       for r in by_severity[n_discard:]),
                      key=lambda r: r.frame_index)
    return retained, discarded


def save_motion_scores(rows: Iterable[tuple[str, int, float]], path: Path | str) -> None:
    """Persist scores as motion_scores.csv (header video_id,frame_index,score)."""
    lines = ["video_id,frame_index,score"]
    lines += [f"{vid},{idx},{score!r}" for vid, idx, score in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_motion_scores(path: Path | str) -> dict[str, dict[int, float]]:
    out: dict[str, dict[int, float]] = {}
    with Path(path).open(encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "video_id,frame_index,score":
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            vid, idx, score = line.split(",")
            out.setdefault(vid, {})[int(idx)] = float(score)
    return out


def score_video_frames(load_frame: Callable[[int], np.ndarray], frame_count: int,
                       params: FlowParams = FlowParams()) -> list[float]:
    """motion_scores over lazily loaded frames, converting each to grayscale."""
    def gen():
        for i in range(frame_count):
            yield to_gray(load_frame(i))
    return motion_scores(gen(), params)
