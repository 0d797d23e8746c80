"""Bounding-box cropping with the pipeline's exact pixel-rounding rule.

Deliberately duplicated from the consumer side (half-away-from-zero rounding
of box edges in pixel space, right/bottom exclusive) so the adapter can crop
without depending on the pipeline package; the shared crop_cases.json fixture
pins both implementations to the same rectangles.
"""

from __future__ import annotations

import math

import numpy as np


def crop_rect(width: int, height: int,
              cx: float, cy: float, w: float, h: float) -> tuple[int, int, int, int]:
    """(x0, x1, y0, y1) pixel rectangle for a normalized center-format box."""
    def round_half_away(v: float) -> int:
        return int(math.floor(v + 0.5))

    x0 = round_half_away((cx - w / 2) * width)
    x1 = round_half_away((cx + w / 2) * width)
    y0 = round_half_away((cy - h / 2) * height)
    y1 = round_half_away((cy + h / 2) * height)
    return x0, x1, y0, y1


def crop_image(image: np.ndarray, cx: float, cy: float, w: float, h: float,
               *, frame: str = "") -> np.ndarray:
    height, width = image.shape[:2]
    x0, x1, y0, y1 = crop_rect(width, height, cx, cy, w, h)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"degenerate crop{' for ' + frame if frame else ''}")
    return image[y0:y1, x0:x1]
