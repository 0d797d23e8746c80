import numpy as np
import pytest

from reid_adapter.config import AdapterConfig, AdapterError
from reid_adapter.models import ToyDetector, ToyEncoder, make_detector, make_encoder


def patch_frame(value=200, size=64):
    img = np.full((size, size, 3), 60, dtype=np.uint8)
    img[10:30, 14:40] = value
    return img


class TestToyDetector:
    def test_finds_patch_box(self):
        (box, conf), = ToyDetector()(patch_frame())
        cx, cy, w, h = box
        assert (cx, cy) == ((14 + 40) / 128, (10 + 30) / 128)
        assert (w, h) == ((40 - 14) / 64, (30 - 10) / 64)
        assert conf == 1.0

    def test_uniform_frame_no_detection(self):
        img = np.full((64, 64, 3), 60, dtype=np.uint8)
        assert ToyDetector()(img) == []


class TestToyEncoder:
    def batch(self, seed=0):
        rng = np.random.default_rng(seed)
        return rng.random((3, 224, 224, 3)).astype(np.float32)

    def test_deterministic(self):
        batch = self.batch()
        a = ToyEncoder()(batch)
        b = ToyEncoder()(batch)
        assert np.array_equal(a, b)

    def test_output_dim(self):
        out = ToyEncoder()(self.batch())
        assert out.shape == (3, 64)
        assert out.dtype == np.float32

    def test_vectors_finite_nonzero(self):
        out = ToyEncoder()(self.batch())
        assert np.all(np.isfinite(out))
        assert np.all(np.linalg.norm(out, axis=1) > 0)


class TestRegistry:
    def test_toy_refs(self):
        config = AdapterConfig()
        assert isinstance(make_detector(config), ToyDetector)
        assert isinstance(make_encoder(config), ToyEncoder)

    def test_unloadable_detector(self):
        with pytest.raises(AdapterError, match="unloadable detector"):
            make_detector(AdapterConfig(detector_ref="yolo11m.pt"))

    def test_unloadable_encoder_path(self):
        with pytest.raises(AdapterError, match="unloadable model"):
            make_encoder(AdapterConfig(encoder_ref="/nowhere/encoder.pt"))
