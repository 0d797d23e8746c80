import numpy as np
import pytest
from scipy import ndimage


def smooth_texture(rng: np.random.Generator, height: int = 128, width: int = 128,
                   sigma: float = 2.0) -> np.ndarray:
    """Band-limited random texture in [0.15, 0.85]; wrap-mode smoothing keeps
    np.roll translations exact everywhere."""
    noise = ndimage.gaussian_filter(rng.random((height, width)), sigma, mode="wrap")
    lo, hi = noise.min(), noise.max()
    return 0.15 + 0.7 * (noise - lo) / (hi - lo)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
