import numpy as np
import pytest

from tomochm import (RasterRecipe, SceneSpec, SLCStack, HeightRaster,
                     estimate_covariance, extract_features, ground_steer,
                     select_subset, slice_features, synthesize_slc_stack,
                     synthetic_geometry)
from tomochm.tomoproc import FeatureStack


def brute_force_covariance(data, wa, wr, normalized=False):
    """Per-pixel double-loop oracle with clamped windows."""
    n, h, w = data.shape
    cov = np.zeros((h, w, n, n), dtype=complex)
    for r in range(h):
        for c in range(w):
            r0, r1 = max(0, r - wa // 2), min(h, r + wa // 2 + 1)
            c0, c1 = max(0, c - wr // 2), min(w, c + wr // 2 + 1)
            acc = np.zeros((n, n), dtype=complex)
            count = 0
            for rr in range(r0, r1):
                for cc in range(c0, c1):
                    u = data[:, rr, cc]
                    acc += np.outer(u, np.conj(u))
                    count += 1
            cov[r, c] = acc / count
    if normalized:
        for r in range(h):
            for c in range(w):
                d = np.sqrt(np.abs(np.diag(cov[r, c])))
                denom = np.outer(d, d)
                with np.errstate(invalid="ignore", divide="ignore"):
                    m = np.where(denom > 0, cov[r, c] / denom, 0)
                cov[r, c] = m
    return cov


def brute_force_features(cov):
    h, w, n, _ = cov.shape
    out = np.zeros((h, w, 3 * n))
    for r in range(h):
        for c in range(w):
            m = cov[r, c]
            out[r, c, :n] = np.diag(m).real
            out[r, c, n:2 * n] = m[0, :].real
            out[r, c, 2 * n:] = m[0, :].imag
    return out


def random_stack(n, h, w, seed):
    rs = np.random.default_rng(seed)
    layers = tuple(rs.standard_normal((h, w)) + 1j * rs.standard_normal((h, w))
                   for _ in range(n))
    return SLCStack(synthetic_geometry(n, 3.0), layers)


@pytest.mark.parametrize("n", [1, 2, 3, 7])
def test_covariance_matches_bruteforce(n):
    stack = random_stack(n, 8, 8, seed=n)
    cov = estimate_covariance(stack, (3, 3))
    oracle = brute_force_covariance(stack.data, 3, 3)
    assert np.abs(cov.data - oracle).max() < 1e-6


def test_covariance_normalized_matches_bruteforce():
    stack = random_stack(3, 8, 8, seed=9)
    cov = estimate_covariance(stack, (3, 3), normalized=True)
    oracle = brute_force_covariance(stack.data, 3, 3, normalized=True)
    assert np.abs(cov.data - oracle).max() < 1e-6
    off = cov.data[..., 0, 1]
    assert (np.abs(off) <= 1 + 1e-6).all()


def test_covariance_single_image_is_window_mean_power():
    stack = random_stack(1, 8, 8, seed=4)
    cov = estimate_covariance(stack, (3, 3))
    oracle = brute_force_covariance(stack.data, 3, 3)
    assert cov.data.shape == (8, 8, 1, 1)
    assert np.abs(cov.data - oracle).max() < 1e-12
    assert (cov.data.imag == 0).all()


def test_covariance_identical_images_full_coherence():
    layer = (np.random.default_rng(0).standard_normal((6, 6))
             + 1j * np.random.default_rng(1).standard_normal((6, 6)))
    stack = SLCStack(synthetic_geometry(2, 3.0), (layer, layer.copy()))
    cov = estimate_covariance(stack, (3, 3), normalized=True)
    assert np.allclose(np.abs(cov.data[..., 0, 1]), 1.0)
    assert np.allclose(cov.data[..., 0, 0], cov.data[..., 1, 1])


def test_covariance_hermitian_psd():
    stack = random_stack(5, 10, 12, seed=3)
    cov = estimate_covariance(stack, (5, 3))
    d = cov.data
    assert np.abs(d - np.conj(np.swapaxes(d, -1, -2))).max() < 1e-6 * \
        np.abs(d).max()
    eig = np.linalg.eigvalsh(d.reshape(-1, 5, 5))
    assert (eig[:, 0] >= -1e-6 * eig[:, -1]).all()


def test_covariance_rejects_even_window():
    stack = random_stack(2, 8, 8, seed=1)
    with pytest.raises(ValueError):
        estimate_covariance(stack, (4, 3))


def test_covariance_thread_count_bit_exact():
    stack = random_stack(4, 16, 16, seed=8)
    one = estimate_covariance(stack, (5, 5), threads=1)
    four = estimate_covariance(stack, (5, 5), threads=4)
    assert np.array_equal(one.data, four.data)


def test_ground_steer_zero_dtm_identity():
    stack = random_stack(3, 8, 8, seed=2)
    dtm = HeightRaster(np.zeros((8, 8)), kind="DTM")
    steered = ground_steer(stack, dtm)
    for a, b in zip(stack.layers, steered.layers):
        assert np.array_equal(a, b)


def test_ground_steer_aligns_ground_only_scene():
    g = synthetic_geometry(7, 3.0)
    scene = SceneSpec(shape=(16, 16),
                      dtm=RasterRecipe("ramp", start=0.0, stop=12.0, axis=0),
                      chm=RasterRecipe("constant", value=0.0),
                      ground_amplitude=1.0, canopy_amplitude=0.0,
                      speckle=False, snr_db=None, rng_seed=1)
    stack, dtm, _ = synthesize_slc_stack(scene, g)
    steered = ground_steer(stack, dtm)
    master = steered.layers[0]
    for layer in steered.layers[1:]:
        assert np.allclose(layer, master, atol=1e-9)
    cov = estimate_covariance(steered, (3, 3))
    assert np.abs(cov.data.imag).max() < 1e-9
    assert np.allclose(cov.data.real, cov.data.real[..., :1, :1], atol=1e-6)


def test_ground_steer_preserves_magnitude():
    stack = random_stack(4, 8, 8, seed=5)
    dtm = HeightRaster(np.random.default_rng(6).uniform(-20, 20, (8, 8)),
                       kind="DTM")
    steered = ground_steer(stack, dtm)
    for a, b in zip(stack.layers, steered.layers):
        assert np.allclose(np.abs(a), np.abs(b), atol=1e-12)
    assert np.array_equal(steered.layers[0], stack.layers[0])


def test_ground_steer_rejects_bad_dtm():
    stack = random_stack(2, 8, 8, seed=5)
    with pytest.raises(ValueError):
        ground_steer(stack, HeightRaster(np.zeros((8, 7)), kind="DTM"))
    holes = np.zeros((8, 8))
    holes[3, 3] = np.nan
    with pytest.raises(ValueError):
        ground_steer(stack, HeightRaster(holes, kind="DTM"))


@pytest.mark.parametrize("n,channels", [(28, 84), (7, 21), (3, 9)])
def test_feature_channel_counts(n, channels):
    stack = random_stack(n, 4, 4, seed=n)
    features = extract_features(estimate_covariance(stack, (3, 3)))
    assert features.data.shape == (4, 4, channels)


def test_features_identity_covariance():
    from tomochm.tomoproc import CovarianceField
    n = 4
    data = np.broadcast_to(np.eye(n, dtype=complex), (5, 5, n, n)).copy()
    features = extract_features(CovarianceField(data, (1, 1)))
    assert np.allclose(features.data[..., :n], 1.0)
    assert np.allclose(features.data[..., n], 1.0)
    assert np.allclose(features.data[..., n + 1:2 * n], 0.0)
    assert np.allclose(features.data[..., 2 * n:], 0.0)


def test_feature_layout_invariants():
    stack = random_stack(5, 8, 8, seed=13)
    cov = estimate_covariance(stack, (3, 3))
    features = extract_features(cov)
    n = 5
    assert (features.data[..., :n] >= 0).all()
    assert np.array_equal(features.data[..., n], features.data[..., 0])
    assert np.allclose(features.data[..., 2 * n], 0.0)
    oracle = brute_force_features(brute_force_covariance(stack.data, 3, 3))
    assert np.abs(features.data - oracle).max() < 1e-6


def reference_select(n, n_total, seed):
    """Independent pure-python twin of the pinned selection rule."""
    mask = (1 << 64) - 1
    state = seed & mask

    def nxt():
        nonlocal state
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        return z ^ (z >> 31)

    pool = list(range(1, n_total))
    for k in range(n - 1):
        j = k + nxt() % (len(pool) - k)
        pool[k], pool[j] = pool[j], pool[k]
    return tuple([0] + sorted(pool[:n - 1]))


def test_select_subset_trivial_cases():
    assert select_subset(28, 28, 42).indices == tuple(range(28))
    assert select_subset(1, 28, 42).indices == (0,)


def test_select_subset_golden_and_reference():
    sel = select_subset(3, 28, 42)
    # frozen golden value from the pinned splitmix64 + Fisher-Yates rule
    assert sel.indices == (0, 3, 20)
    assert sel.indices == reference_select(3, 28, 42)
    for n, total, seed in [(7, 28, 42), (5, 12, 7), (3, 28, 1234)]:
        assert select_subset(n, total, seed).indices == \
            reference_select(n, total, seed)


def test_select_subset_pure_and_seed_sensitive():
    base = select_subset(3, 28, 42).indices
    assert all(select_subset(3, 28, 42).indices == base for _ in range(1000))
    others = {select_subset(3, 28, seed).indices for seed in range(50)}
    assert len(others) > 25  # distinct seeds overwhelmingly differ


def test_select_subset_bounds():
    with pytest.raises(ValueError):
        select_subset(29, 28, 42)
    with pytest.raises(ValueError):
        select_subset(0, 28, 42)


def test_slice_features_identity_and_master_only():
    stack = random_stack(6, 6, 6, seed=21)
    features = extract_features(estimate_covariance(stack, (3, 3)))
    full = select_subset(6, 6, 42)
    assert np.array_equal(slice_features(features, full).data, features.data)
    master = select_subset(1, 6, 42)
    sliced = slice_features(features, master)
    assert sliced.data.shape == (6, 6, 3)
    assert np.array_equal(sliced.data[..., 0], features.data[..., 0])
    assert np.array_equal(sliced.data[..., 1], features.data[..., 0])
    assert np.allclose(sliced.data[..., 2], 0.0)


def test_slice_features_matches_oracle_gather():
    stack = random_stack(10, 8, 8, seed=30)
    cov = estimate_covariance(stack, (3, 3))
    features = extract_features(cov)
    from tomochm.tomoproc import SubsetSelection
    sel = SubsetSelection(3, (0, 4, 9), seed=0)
    sliced = slice_features(features, sel)
    oracle_cov = brute_force_covariance(stack.data, 3, 3)
    idx = [0, 4, 9]
    expect = np.concatenate([
        np.stack([oracle_cov[..., i, i].real for i in idx], axis=-1),
        np.stack([oracle_cov[..., 0, i].real for i in idx], axis=-1),
        np.stack([oracle_cov[..., 0, i].imag for i in idx], axis=-1),
    ], axis=-1)
    assert np.abs(sliced.data - expect).max() < 1e-6


def test_slice_features_out_of_range():
    stack = random_stack(3, 4, 4, seed=1)
    features = extract_features(estimate_covariance(stack, (3, 3)))
    from tomochm.tomoproc import SubsetSelection
    with pytest.raises(IndexError):
        slice_features(features, SubsetSelection(2, (0, 5), seed=0))


def test_subset_selection_invariants():
    from tomochm.tomoproc import SubsetSelection
    with pytest.raises(ValueError):
        SubsetSelection(2, (1, 2), seed=0)     # no master
    with pytest.raises(ValueError):
        SubsetSelection(3, (0, 2, 2), seed=0)  # duplicate
    with pytest.raises(ValueError):
        SubsetSelection(3, (0, 2), seed=0)     # wrong length
