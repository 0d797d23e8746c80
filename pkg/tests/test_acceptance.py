"""Acceptance suite: every criterion at its stated tolerance, one printed
pass line per criterion.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines as they pass.
"""

import json
import time

import numpy as np
import pytest

from wildreid.cli import run_all
from wildreid.config import load_config
from wildreid.core import BoundingBox, EmbeddingRecord, FrameRecord, FrameStatus
from wildreid.evaluate import mcnemar_exact, pairwise_significance
from wildreid.keyframes import (SelectionKind, SelectionMethod, kmeans, kmedoids,
                                select_keyframes, silhouette_score)
from wildreid.motion import blur_filter, farneback_flow
from wildreid.reid import image_accuracy, load_matches
from wildreid.store import EmbeddingStore, read_store, write_store
from wildreid.synth import SynthProfile, generate
from wildreid.umap import UmapParams, umap_reduce

from conftest import smooth_texture
from oracles import (adjusted_rand_index, binomial_tail_oracle,
                     no_single_swap_improves, pam_oracle_best_pair,
                     silhouette_oracle)


def ok(name, detail=""):
    print(f"\nACCEPTANCE {name}: PASS {detail}".rstrip())


def make_config(root, seed=0):
    (root / "run_config.json").write_text(json.dumps({
        "dataset_root": ".", "detections_path": "detections.jsonl",
        "embeddings_path": "embeddings.emb", "output_dir": "output",
        "seed": seed,
    }))
    return load_config(root / "run_config.json")


@pytest.fixture(scope="session")
def clean_run(tmp_path_factory):
    """Full pipeline over the low-noise synthetic profile, wall-clock timed."""
    root = tmp_path_factory.mktemp("accept_clean")
    profile = SynthProfile(individuals=7, videos_per_individual=4,
                           frames_per_video=60, embedding_noise=0.01,
                           embedding_dim=16, frame_height=96, frame_width=96,
                           seed=20)
    generate(profile, root)
    config = make_config(root, seed=20)
    start = time.monotonic()
    report = run_all(config)
    elapsed = time.monotonic() - start
    return root, config, report, elapsed


@pytest.fixture(scope="session")
def noisy_run(tmp_path_factory):
    """Same population under heavy embedding noise (overlapping clusters)."""
    root = tmp_path_factory.mktemp("accept_noisy")
    profile = SynthProfile(individuals=7, videos_per_individual=4,
                           frames_per_video=60, embedding_noise=0.9,
                           embedding_dim=16, frame_height=48, frame_width=48,
                           seed=21)
    generate(profile, root)
    config = make_config(root, seed=21)
    report = run_all(config)
    return root, config, report


def test_flow_oracle():
    rng = np.random.default_rng(77)
    base = smooth_texture(rng, 128, 128)
    shifts = [(2, 0), (-1, 3), (0, -2), (3, 3), (-3, -1), (1, 1), (0, 2),
              (-2, -2), (3, 0), (0, -3), (1, -1), (-1, 0), (2, 2), (0, 1),
              (-3, 3), (1, 0), (0, 0), (2, -3), (-2, 1)]
    frames = [base]
    for sx, sy in shifts:
        frames.append(np.roll(frames[-1], (sy, sx), axis=(0, 1)))
    assert len(frames) == 20

    start = time.monotonic()
    margin = 16  # central 75% per axis of a 128-px frame
    worst = 0.0
    for prev, nxt, (sx, sy) in zip(frames, frames[1:], shifts):
        flow = farneback_flow(prev, nxt)
        err = np.hypot(flow.dx[margin:-margin, margin:-margin] - sx,
                       flow.dy[margin:-margin, margin:-margin] - sy).mean()
        worst = max(worst, err)
        assert err < 0.5
    static = farneback_flow(base, base).magnitude().mean()
    assert static < 1e-3
    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    ok("flow-oracle", f"(worst mean error {worst:.3f} px, {elapsed:.1f}s)")


def test_blur_filter_fixture_and_property():
    box = BoundingBox(0.5, 0.5, 0.5, 0.5, 0.9)

    def frames(n):
        return [FrameRecord("v", i, FrameStatus.DETECTED, box, float((i * 17) % 101))
                for i in range(n)]

    retained, dropped = blur_filter(frames(151), 0.2)
    assert (len(dropped), len(retained)) == (31, 120)

    rng = np.random.default_rng(5)
    for n in rng.integers(1, 501, size=200):
        n = int(n)
        retained, dropped = blur_filter(frames(n), 0.2)
        expected_drop = (n + 4) // 5  # exact ceil(0.2 n)
        assert len(dropped) == expected_drop
        assert len(retained) == n - expected_drop
    ok("blur-filter", "(151 -> 31/120; 200 random sizes)")


def test_silhouette_oracle_equivalence():
    rng = np.random.default_rng(9)
    checked = 0
    while checked < 200:
        n = int(rng.integers(4, 51))
        d = int(rng.integers(1, 11))
        k = int(rng.integers(2, 7))
        points = rng.normal(size=(n, d))
        labels = rng.integers(0, k, size=n)
        if len(np.unique(labels)) < 2:
            continue
        mine = silhouette_score(points, labels)
        theirs = silhouette_oracle(points, labels)
        assert abs(mine - theirs) < 1e-9
        checked += 1
    ok("silhouette-oracle", "(200 instances within 1e-9)")


def test_kmedoids_local_optimality():
    pts = np.array([[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]])
    res = kmedoids(pts, 2)
    oracle_meds, oracle_dev = pam_oracle_best_pair(pts)
    assert set(res.medoid_indices) == oracle_meds == {1, 4}
    assert res.total_deviation == pytest.approx(oracle_dev) == pytest.approx(4.0)

    rng = np.random.default_rng(13)
    for _ in range(100):
        n = int(rng.integers(5, 41))
        k = int(rng.integers(2, min(8, n)))
        points = rng.normal(size=(n, int(rng.integers(1, 5))))
        result = kmedoids(points, k)
        assert no_single_swap_improves(points, result.medoid_indices,
                                       result.total_deviation)
    ok("kmedoids-local-optimality", "(fixture {1,11}; 100 swap fixpoints)")


def test_kmeans_blob_recovery():
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    labels = np.repeat([0, 1, 2], 25)
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        points = centers[labels] + rng.normal(0, 0.5, (75, 2))
        res = kmeans(points, 3, seed=seed)
        assert adjusted_rand_index(res.assignments, labels) == 1.0
        hist = res.inertia_history
        assert all(hist[i + 1] <= hist[i] + 1e-9 for i in range(len(hist) - 1))
    ok("kmeans-blob-recovery", "(ARI 1.0 across 20 seeds)")


def test_umap_determinism_and_structure():
    rng = np.random.default_rng(3)
    blob_a = rng.normal(0, 1.0, (30, 10))
    blob_b = rng.normal(0, 1.0, (30, 10))
    blob_b[:, 0] += 50.0
    points = np.vstack([blob_a, blob_b])

    first = umap_reduce(points, UmapParams(seed=42))
    second = umap_reduce(points, UmapParams(seed=42))
    assert first.shape == (60, 5)
    assert np.array_equal(first, second)

    dist = np.linalg.norm(first[:, None] - first[None, :], axis=2)
    intra = max(dist[:30, :30].max(), dist[30:, 30:].max())
    inter = dist[:30, 30:].min()
    assert intra < inter
    ok("umap-determinism-structure",
       f"(bit-identical; intra {intra:.2f} < inter {inter:.2f})")


def test_mcnemar_oracle():
    assert mcnemar_exact([True] * 2 + [False] * 8,
                         [False] * 2 + [True] * 8) == 0.109375
    assert mcnemar_exact([False] * 10, [True] * 10) == 0.001953125

    for n in range(0, 26):
        for b in range(n + 1):
            c = n - b
            p = mcnemar_exact([True] * b + [False] * c,
                              [False] * b + [True] * c)
            assert abs(p - binomial_tail_oracle(b, c)) < 1e-12

    methods = [f"m{i}" for i in range(7)]
    outcomes = {m: {f"v{j}": j % 2 == 0 for j in range(10)} for m in methods}
    results = pairwise_significance(methods, outcomes)
    assert len(results) == 21
    assert all(r.alpha_adjusted == pytest.approx(0.05 / 21) for r in results)
    ok("mcnemar-oracle", "(exact fixtures; enumeration to n=25; 21 pairs)")


def test_end_to_end_clean(clean_run):
    root, config, report, elapsed = clean_run
    assert set(report.per_method) == {k.value for k in SelectionKind}
    for name, rep in report.per_method.items():
        assert rep.image_accuracy == 1.0, f"{name} image accuracy {rep.image_accuracy}"
        assert rep.video_accuracy["vote"] == 1.0, f"{name} vote accuracy"
    assert elapsed < 120.0
    ok("end-to-end-clean",
       f"(all 6 methods at 100% image + vote accuracy, {elapsed:.0f}s)")


def test_end_to_end_noisy_ordering(noisy_run):
    _, _, report = noisy_run
    degraded = [rep.image_accuracy for rep in report.per_method.values()]
    assert min(degraded) < 0.999  # overlapping clusters must hurt
    for name, rep in report.per_method.items():
        vote = rep.video_accuracy["vote"]
        t60 = rep.video_accuracy["t60"]
        t80 = rep.video_accuracy["t80"]
        assert vote >= t60 >= t80, f"{name}: vote {vote} t60 {t60} t80 {t80}"
    ok("end-to-end-noisy",
       f"(min image accuracy {min(degraded):.3f}; vote >= t60 >= t80 on all methods)")


def test_keyframe_cardinality_sweep():
    rng = np.random.default_rng(8)
    sizes = [1, 2, 4, 5, 6, 7, 150, 300] + [int(v) for v in rng.integers(8, 121, 14)]
    methods = [SelectionMethod(kind, seed=2) for kind in SelectionKind]
    for n in sizes:
        indices = list(range(n))
        vectors = rng.normal(size=(n, 8))
        for method in methods:
            kfs = select_keyframes("v1", indices, vectors, method)
            count = len(kfs.key_frame_indices)
            assert set(kfs.key_frame_indices) <= set(indices)
            if n <= 5:
                assert count == n
                assert kfs.k_chosen is None
            elif method.kind.is_random:
                assert count == min(method.kind.random_count, n)
            else:
                assert 5 <= count <= 20
                assert count == kfs.k_chosen
                assert 5 <= kfs.k_chosen <= min(20, n - 1)
    ok("keyframe-cardinality", f"(sizes {sorted(set(sizes))})")


def test_store_round_trip_thousand(tmp_path):
    rng = np.random.default_rng(4)
    path = tmp_path / "roundtrip.emb"
    for i in range(1000):
        dim = int(rng.integers(1, 17))
        n = int(rng.integers(0, 9))
        encoder = f"enc{int(rng.integers(0, 1000))}"
        records = []
        for j in range(n):
            label = f"L{int(rng.integers(0, 5))}" if rng.random() < 0.5 else None
            records.append(EmbeddingRecord(
                f"v{int(rng.integers(0, 50))}", j, encoder,
                rng.normal(size=dim).astype(np.float32), label))
        store = EmbeddingStore(encoder, dim, records)
        write_store(store, path)
        assert read_store(path) == store

    records = [EmbeddingRecord(f"v{i // 7}", i % 7, "dinov2-s14",
                               rng.normal(size=384).astype(np.float32),
                               label=f"L{i % 5}")
               for i in range(816)]
    store = EmbeddingStore("dinov2-s14", 384, records)
    write_store(store, path)
    size = path.stat().st_size
    expected = 4 + 1 + 3 + 4 + 8 + 2 + 10  # header with 10-byte encoder id
    for rec in store:
        expected += 2 + len(rec.key.encode()) + 1 + 2 + len(rec.label.encode()) + 4 * 384
    assert size == expected
    assert read_store(path) == store
    ok("store-round-trip", f"(1000 random stores; 816x384 file = {size} bytes)")


def test_report_artifacts_written(clean_run):
    root, config, report, _ = clean_run
    out = root / "output"
    report_data = json.loads((out / "report.json").read_text())
    assert len(report_data["per_method"]) == 6
    assert len(report_data["mcnemar"]) == 15
    assert (out / "report.csv").exists()
    assert (out / "figures" / "accuracy_by_method.png").exists()
    matches = load_matches(out / "matches_kmeans.csv")
    assert image_accuracy(matches).overall == 1.0
    ok("report-artifacts", "(report.json/csv + figures consistent)")
