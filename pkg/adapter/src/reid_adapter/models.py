"""Detector and encoder backends.

The "toy" backends are fully deterministic and need no weights, so the
conformance suite runs anywhere; real models load from TorchScript files and
are never vendored.
"""

from __future__ import annotations

import numpy as np

from .config import AdapterConfig, AdapterError

GRAY_WEIGHTS = (0.299, 0.587, 0.114)

TOY_PATCH_THRESHOLD = 0.2   # |pixel - background median| on the [0,1] scale
TOY_MIN_PIXELS = 4
TOY_POOL = 16               # toy encoder pools the model input down to 16x16
TOY_DIM = 64
TOY_PROJECTION_SEED = 7


def to_gray(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim == 3:
        r, g, b = (arr[..., i].astype(np.float64) for i in range(3))
        arr = GRAY_WEIGHTS[0] * r + GRAY_WEIGHTS[1] * g + GRAY_WEIGHTS[2] * b
    else:
        arr = arr.astype(np.float64)
    if np.issubdtype(np.asarray(image).dtype, np.integer):
        arr /= 255.0
    return arr


class ToyDetector:
    """Finds the axis-aligned box of pixels deviating from the background
    median; confidence is the box's fill ratio."""

    def __call__(self, image: np.ndarray) -> list[tuple[tuple[float, float, float, float], float]]:
        gray = to_gray(image)
        height, width = gray.shape
        mask = np.abs(gray - np.median(gray)) > TOY_PATCH_THRESHOLD
        if mask.sum() < TOY_MIN_PIXELS:
            return []
        rows = np.nonzero(mask.any(axis=1))[0]
        cols = np.nonzero(mask.any(axis=0))[0]
        y0, y1 = int(rows[0]), int(rows[-1]) + 1
        x0, x1 = int(cols[0]), int(cols[-1]) + 1
        box = ((x0 + x1) / (2 * width), (y0 + y1) / (2 * height),
               (x1 - x0) / width, (y1 - y0) / height)
        confidence = float(mask[y0:y1, x0:x1].mean())
        return [(box, confidence)]


class ToyEncoder:
    """Fixed random projection of downscaled, normalized pixels."""

    dim = TOY_DIM

    def __init__(self):
        rng = np.random.default_rng(TOY_PROJECTION_SEED)
        self._projection = rng.normal(0.0, 1.0, (TOY_POOL * TOY_POOL * 3, TOY_DIM))

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        """batch: (n, size, size, 3) normalized float32 -> (n, dim) float32."""
        n, size = batch.shape[0], batch.shape[1]
        if size % TOY_POOL != 0:
            raise AdapterError(f"toy encoder needs input_size divisible by {TOY_POOL}")
        block = size // TOY_POOL
        pooled = batch.reshape(n, TOY_POOL, block, TOY_POOL, block, 3).mean(axis=(2, 4))
        flat = pooled.reshape(n, -1).astype(np.float64)
        return (flat @ self._projection).astype(np.float32)


def _load_torchscript(path: str):
    try:
        import torch
    except ImportError as exc:
        raise AdapterError(
            f"loading {path!r} needs the optional torch dependency") from exc
    try:
        model = torch.jit.load(path, map_location="cpu")
    except Exception as exc:
        raise AdapterError(f"unloadable model {path!r}: {exc}") from exc
    model.eval()
    return model


class TorchEncoder:
    """TorchScript image encoder: (n, 3, size, size) float32 -> (n, dim)."""

    def __init__(self, ref: str):
        self._model = _load_torchscript(ref)
        self.dim: int | None = None  # discovered on the first batch

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        import torch
        tensor = torch.from_numpy(np.transpose(batch, (0, 3, 1, 2)).copy())
        with torch.no_grad():
            out = self._model(tensor).numpy().astype(np.float32)
        if out.ndim != 2:
            raise AdapterError(f"encoder returned shape {out.shape}, expected (n, dim)")
        if self.dim is None:
            self.dim = out.shape[1]
        return out


def make_detector(config: AdapterConfig):
    if config.detector_ref == "toy":
        return ToyDetector()
    raise AdapterError(
        f"unloadable detector {config.detector_ref!r}: only the builtin 'toy' "
        "detector ships with the adapter")


def make_encoder(config: AdapterConfig):
    if config.encoder_ref == "toy":
        return ToyEncoder()
    return TorchEncoder(config.encoder_ref)
