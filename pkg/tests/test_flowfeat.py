"""Hand-crafted motion features: flow, Otsu, k-means, VLAD, embedding cache."""

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage

from motiondesk.flowfeat import (
    FlowCodebook,
    FlowField,
    FlowSettings,
    build_flow_codebook,
    clip_embedding,
    compute_flow,
    embed_corpus,
    kmeans,
    otsu_threshold,
    read_embeddings,
    vlad_vector,
    write_embeddings,
)
from motiondesk.flowfeat.kmeans import assign


# ---------------------------------------------------------------- Otsu


def otsu_brute_force(x, n_bins=256):
    """Direct scan over candidate edges i*max/n_bins, splitting on values (< edge)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    top = x.max()
    if top <= 0:
        return 0.0
    width = top / n_bins
    bins = np.minimum((x / width).astype(np.int64), n_bins - 1)
    best, best_t = 0.0, 0.0
    for i in range(n_bins):
        lo, hi = x[bins < i], x[bins >= i]
        if len(lo) == 0 or len(hi) == 0:
            continue
        var = len(lo) * len(hi) * (lo.mean() - hi.mean()) ** 2 / len(x) ** 2
        if var > best:
            best, best_t = var, i * width
    return best_t


def test_otsu_equals_brute_force_on_1000_random_inputs():
    rng = np.random.default_rng(0)
    for trial in range(1000):
        n = int(rng.integers(2, 200))
        kind = trial % 3
        if kind == 0:
            x = rng.random(n) * rng.uniform(0.1, 10)
        elif kind == 1:
            x = np.abs(np.concatenate([rng.normal(0.2, 0.05, n), rng.normal(2.0, 0.3, n // 2 + 1)]))
        else:
            x = rng.exponential(1.0, n)
        assert otsu_threshold(x) == otsu_brute_force(x), trial


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 60), elements=st.floats(0, 100, allow_subnormal=False)))
def test_otsu_property_matches_oracle_and_separates(x):
    t = otsu_threshold(x)
    assert t == otsu_brute_force(x)
    assert 0.0 <= t <= x.max()


def test_otsu_hand_cases():
    assert otsu_threshold(np.zeros(10)) == 0.0
    assert otsu_threshold(np.full(10, 3.0)) == 0.0  # one class: zero between-class variance
    # two well separated groups: threshold falls between them at a bin edge
    t = otsu_threshold(np.array([0.0, 0.1, 0.2, 9.8, 10.0]))
    assert 0.2 < t <= 9.8
    with pytest.raises(ValueError):
        otsu_threshold(np.array([]))
    with pytest.raises(ValueError):
        otsu_threshold(np.array([-1.0, 2.0]))


# ---------------------------------------------------------------- k-means


@pytest.mark.parametrize("seed", range(5))
def test_kmeans_inertia_monotone_and_converges_to_fixed_point(seed):
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=5, size=(4, 3))
    pts = np.concatenate([c + rng.normal(size=(30, 3)) for c in centers])
    res = kmeans(pts, 4, seed=seed)
    hist = np.array(res.inertia_history)
    assert np.all(np.diff(hist) <= 1e-9 * hist[0])
    labels, d2 = assign(pts, res.centroids)
    np.testing.assert_array_equal(labels, res.labels)
    for c in range(4):
        np.testing.assert_allclose(res.centroids[c], pts[labels == c].mean(axis=0), rtol=0, atol=1e-12)
    assert res.inertia == pytest.approx(d2.sum(), rel=1e-12)


def test_kmeans_deterministic_and_single_cluster_mean():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(50, 2))
    a, b = kmeans(pts, 3, seed=9), kmeans(pts, 3, seed=9)
    np.testing.assert_array_equal(a.centroids, b.centroids)
    np.testing.assert_allclose(kmeans(pts, 1, seed=0).centroids[0], pts.mean(axis=0), atol=1e-12)
    with pytest.raises(ValueError):
        kmeans(pts[:2], 3, seed=0)


def test_assign_breaks_ties_to_lowest_index():
    labels, _ = assign(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert labels[0] == 0


# ---------------------------------------------------------------- VLAD


def test_vlad_hand_oracles():
    c = np.array([[0.0, 0.0], [10.0, 10.0]])
    np.testing.assert_allclose(vlad_vector(np.array([[1.0, 0.0]]), c), [1.0, 0.0, 0.0, 0.0], rtol=0, atol=1e-12)
    # residuals (4, 0) and (0, 9) -> ssr (2, 0, 0, 3) -> / sqrt(13)
    got = vlad_vector(np.array([[4.0, 0.0], [10.0, 19.0]]), c)
    np.testing.assert_allclose(got, np.array([2.0, 0.0, 0.0, 3.0]) / np.sqrt(13.0), rtol=0, atol=1e-12)
    # negative residual sums keep their sign through the signed square root
    got = vlad_vector(np.array([[-4.0, 1.0], [0.0, -2.0]]), c)
    np.testing.assert_allclose(got, np.array([-2.0, -1.0, 0.0, 0.0]) / np.sqrt(5.0), rtol=0, atol=1e-12)
    # residuals cancelling to zero stay zero (no division by zero)
    np.testing.assert_array_equal(vlad_vector(np.array([[1.0, 1.0], [-1.0, -1.0]]), c), np.zeros(4))
    np.testing.assert_array_equal(vlad_vector(np.zeros((0, 2)), c), np.zeros(4))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.just(2)), elements=st.floats(-5, 5)))
def test_vlad_unit_norm_or_zero(desc):
    c = np.array([[0.0, 0.0], [1.0, 1.0], [-2.0, 0.5]])
    v = vlad_vector(desc, c)
    n = np.linalg.norm(v)
    assert n == 0.0 or abs(n - 1.0) < 1e-12


# ---------------------------------------------------------------- flow


def _texture(size, seed):
    rng = np.random.default_rng(seed)
    t = ndimage.gaussian_filter(rng.random((size, size)), 2.0, mode="wrap")
    return (t - t.min()) / (t.max() - t.min())


@pytest.mark.parametrize("shift", [1, 2])
def test_flow_recovers_translation(shift):
    a = _texture(48, 0)
    b = np.roll(a, shift, axis=1)
    f = compute_flow(a, b, levels=3, smoothness_weight=0.1, iterations=80)
    inner = (slice(8, -8), slice(8, -8))
    assert abs(np.median(f.dx[inner]) - shift) < 0.15
    assert abs(np.median(f.dy[inner])) < 0.15


def test_flow_zero_for_identical_frames_and_validates_inputs():
    a = _texture(32, 1)
    f = compute_flow(a, a)
    assert np.abs(f.magnitudes()).max() < 1e-12
    assert f.entries().shape == (32 * 32, 2)
    with pytest.raises(ValueError):
        compute_flow(a, a[:16])
    with pytest.raises(ValueError):
        compute_flow(a[:8, :8], a[:8, :8])


# ---------------------------------------------------------------- clip embedding and corpus


def _moving_clip(seed, frames=5, shift=1):
    a = _texture(32, seed)
    return np.stack([np.roll(a, shift * t, axis=1) for t in range(frames)])


def test_clip_embedding_dimension_law_and_errors():
    clip = _moving_clip(2, frames=4)
    cb = FlowCodebook(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), seed=0)
    emb = clip_embedding(clip, 0.1, cb, FlowSettings(levels=2, iterations=20))
    assert emb.shape == ((4 - 1) * 3 * 2,)
    np.testing.assert_array_equal(emb, clip_embedding(clip, 0.1, cb, FlowSettings(levels=2, iterations=20)))
    with pytest.raises(ValueError):
        clip_embedding(clip[:1], 0.1, cb)


def test_codebook_refuses_degenerate_entries():
    flows = [FlowField(np.ones((16, 16)), np.zeros((16, 16)))]
    with pytest.raises(Exception, match="distinct"):
        build_flow_codebook(flows, 0.5, n_clusters=4)


def test_static_corpus_embeds_to_zeros_with_warning(caplog):
    clips = [np.stack([_texture(32, s)] * 4) for s in range(3)]
    with caplog.at_level(logging.WARNING):
        emb = embed_corpus(clips, n_clusters=4, seed=0, settings=FlowSettings(levels=2, iterations=10))
    assert emb.embeddings.shape == (3, 3 * 4 * 2)
    assert not emb.embeddings.any()
    assert emb.warnings and "zero" in emb.warnings[0]
    assert any("zero" in r.getMessage() for r in caplog.records)


def test_embed_corpus_deterministic_with_workers():
    clips = [_moving_clip(s, frames=3, shift=1 + s % 2) for s in range(4)]
    st_ = FlowSettings(levels=2, iterations=15)
    a = embed_corpus(clips, n_clusters=4, seed=3, settings=st_)
    b = embed_corpus(clips, n_clusters=4, seed=3, settings=st_, workers=2)
    np.testing.assert_array_equal(a.embeddings, b.embeddings)
    assert a.threshold == b.threshold


# ---------------------------------------------------------------- cache


def test_embedding_cache_round_trip(tmp_path):
    emb = np.random.default_rng(0).normal(size=(5, 7))
    p = tmp_path / "e.mdemb"
    write_embeddings(p, emb)
    assert p.read_bytes().startswith(b"MDEMB 1 5 7\n")
    assert len(p.read_bytes()) == len(b"MDEMB 1 5 7\n") + 5 * 7 * 8
    np.testing.assert_array_equal(read_embeddings(p), emb)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_embeddings(p)
