"""Cross-package conformance: the adapter's emitted files must parse cleanly
with the pipeline's own readers and reproduce the checked-in golden fixtures
byte for byte."""

import logging

import pytest

from reid_adapter.config import AdapterConfig
from reid_adapter.pipeline import detect, embed

from wildreid.core import load_detections
from wildreid.store import read_store


@pytest.fixture
def regenerated(conformance_dir, tmp_path):
    config = AdapterConfig()
    det = tmp_path / "detections.jsonl"
    emb = tmp_path / "vectors.emb"
    detect(conformance_dir / "frames", det, config)
    embed(conformance_dir / "frames", det, emb, config)
    return det, emb


def test_detections_reproduce_golden_bytes(conformance_dir, regenerated):
    det, _ = regenerated
    assert det.read_bytes() == (conformance_dir / "golden_detections.jsonl").read_bytes()


def test_emb_reproduces_golden_bytes(conformance_dir, regenerated):
    _, emb = regenerated
    assert emb.read_bytes() == (conformance_dir / "golden.emb").read_bytes()


def test_outputs_parse_cleanly_in_pipeline(regenerated, caplog):
    det, emb = regenerated
    with caplog.at_level(logging.WARNING):
        detections = load_detections(det)
        store = read_store(emb)
    assert not caplog.records, [r.message for r in caplog.records]
    parsed = {(vid, idx) for vid, frames in detections.items() for idx in frames}
    assert parsed == {("v0", 0), ("v0", 1), ("v1", 0), ("v1", 1)}
    assert len(store) == 4
    assert store.encoder_id == "toy-rp64"
    assert store.dim == 64
    for record in store:
        assert record.label is None
        assert float(abs(record.vector).max()) > 0


def test_boxes_survive_pipeline_clamping(regenerated):
    det, _ = regenerated
    detections = load_detections(det)
    for frames in detections.values():
        for box in frames.values():
            assert 0.0 <= box.cx - box.w / 2 <= 1.0
            assert 0.0 <= box.cx + box.w / 2 <= 1.0
            assert box.confidence >= 0.8
