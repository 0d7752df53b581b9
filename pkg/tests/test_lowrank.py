import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wcsr.lowrank import (
    AnchorGrid,
    CompletionResult,
    OccupancyMatrix,
    assign_to_anchors,
    binarize_occupancy,
    build_anchor_grid,
    complete_global,
    complete_local,
    complete_svt,
    kernel_weights,
    merge_global,
    required_samples,
    sample_mask,
    svt_shrink,
)


def full(M):
    M = np.asarray(M, dtype=float)
    return OccupancyMatrix(M, np.ones_like(M, dtype=bool), np.zeros((M.shape[1], 2)))


# -- anchor grid -----------------------------------------------------------------


def test_small_region_one_anchor():
    assert build_anchor_grid((0, 0, 10, 10), 50.0).q == 1


def test_two_by_two_lattice():
    side = 2 * 50.0 * math.sqrt(2)
    g = build_anchor_grid((0, 0, side, side), 50.0)
    assert g.q == 4
    spacing = 50.0 * math.sqrt(2)
    np.testing.assert_allclose(sorted(set(np.round(g.anchors[:, 0], 9))), [spacing / 2, 3 * spacing / 2])


@pytest.mark.parametrize("region,R", [((0, 0, 500, 300), 50.0), ((-20, 5, 33, 7), 4.0), ((0, 0, 0, 0), 1.0)])
def test_grid_coverage(region, R):
    g = build_anchor_grid(region, R)
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(region[0], region[2], 10_000), rng.uniform(region[1], region[3], 10_000)])
    d = np.linalg.norm(pts[:, None, :] - g.anchors[None], axis=-1).min(axis=1)
    assert d.max() <= R + 1e-9
    assert np.all((g.anchors >= np.array(region[:2])) & (g.anchors <= np.array(region[2:])))


def test_grid_errors():
    with pytest.raises(ValueError):
        build_anchor_grid((0, 0, 1, 1), 0.0)
    with pytest.raises(ValueError):
        build_anchor_grid((1, 0, 0, 1), 1.0)


# -- assignment ------------------------------------------------------------------


def test_node_on_anchor_and_tie():
    g = AnchorGrid(np.array([[0.0, 0.0], [10.0, 0.0]]), 5.0)
    np.testing.assert_array_equal(assign_to_anchors([[10.0, 0.0], [5.0, 0.0], [5.0, 3.0]], g), [1, 0, 0])


def test_assignment_matches_bruteforce():
    rng = np.random.default_rng(1)
    side = 2 * 50.0 * math.sqrt(2)
    g = build_anchor_grid((0, 0, side, side), 50.0)
    assert g.q == 4
    pos = rng.uniform(0, side, (20, 2))
    got = assign_to_anchors(pos, g)
    for v, p in enumerate(pos):
        best = min(range(g.q), key=lambda c: (math.dist(p, g.anchors[c]), c))
        assert got[v] == best


# -- sampling --------------------------------------------------------------------


def test_required_samples_examples():
    assert required_samples(100, 100, 0) == 0
    assert required_samples(100, 100, 2) == 2913
    assert required_samples(60, 60, 2) == math.ceil(60**1.25 * 2 * math.log(60))


@given(st.integers(2, 400), st.integers(2, 400), st.integers(1, 20))
def test_required_samples_monotone(n, u, r):
    base = required_samples(n, u, r)
    assert required_samples(n, u, r + 1) > base
    assert required_samples(max(n, u) + 1, u, r) > base


def test_required_samples_errors():
    with pytest.raises(ValueError):
        required_samples(10, 10, -1)
    with pytest.raises(ValueError):
        required_samples(10, 10, 1, C=0)


def test_mask_counts():
    assert sample_mask(30, 7, 1.0, rng=0).all()
    for mode in ("random", "contiguous"):
        m = sample_mask(200, 9, 0.25, mode, rng=1)
        np.testing.assert_array_equal(m.sum(axis=0), 50)
    runs = sample_mask(50, 20, 0.2, "contiguous", rng=2)
    for col in runs.T:
        idx = np.flatnonzero(col)
        assert idx[-1] - idx[0] == idx.size - 1


def test_random_mask_is_uniform_over_bands():
    n, draws = 20, 10_000
    counts = sample_mask(n, draws, 0.25, "random", rng=3).sum(axis=1)
    p = 5 / n
    # each band count is Binomial(draws, p); the standardised squared
    # deviations sum to a statistic with mean n and sd about sqrt(2n)
    stat = np.sum((counts - draws * p) ** 2) / (draws * p * (1 - p))
    assert abs(stat - n) <= 3 * math.sqrt(2 * n)


def test_mask_errors():
    with pytest.raises(ValueError):
        sample_mask(10, 2, 0.0)
    with pytest.raises(ValueError):
        sample_mask(10, 2, 0.5, "striped")


# -- SVT -------------------------------------------------------------------------


def test_svt_full_rank_one_small_tau():
    rng = np.random.default_rng(4)
    M = np.outer(rng.standard_normal(12), rng.standard_normal(9))
    res = complete_svt(full(M), tau=1e-3)
    assert np.linalg.norm(res.X_hat - M) / np.linalg.norm(M) < 1e-3
    assert res.rank_estimate == 1


def test_shrink_beyond_top_singular_value_is_zero():
    M = np.random.default_rng(5).standard_normal((6, 4))
    X, kept = svt_shrink(M, np.linalg.norm(M, 2) + 1e-9)
    assert not X.any() and kept.size == 0


def test_shrink_matches_direct_formula():
    M = np.random.default_rng(6).standard_normal((7, 5))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    X, _ = svt_shrink(M, 0.8)
    np.testing.assert_allclose(X, U @ np.diag(np.maximum(s - 0.8, 0)) @ Vt, atol=1e-12)


def _rank1_pm1(rng, n=20, f=0.6):
    M = np.outer(rng.choice([-1.0, 1.0], n), rng.choice([-1.0, 1.0], n))
    mask = rng.random((n, n)) < f
    return M, OccupancyMatrix(M, mask, np.zeros((n, 2)))


def test_svt_rank_one_sign_matrix():
    M, obs = _rank1_pm1(np.random.default_rng(7))
    res = complete_svt(obs)
    assert np.linalg.norm(res.X_hat - M) / np.linalg.norm(M) < 1e-2


def test_svt_residual_monotone_every_ten_iterations():
    for seed in range(5):
        _, obs = _rank1_pm1(np.random.default_rng(100 + seed))
        hist = complete_svt(obs, tol=1e-8, max_iter=300).history
        checkpoints = hist[::10]
        assert all(b <= a + 1e-9 for a, b in zip(checkpoints, checkpoints[1:]))


def test_svt_rank_estimate_bounded_by_planted_rank():
    rng = np.random.default_rng(8)
    for r in (1, 2, 3):
        M = rng.standard_normal((30, r)) @ rng.standard_normal((r, 30))
        obs = OccupancyMatrix(M, rng.random(M.shape) < 0.7, np.zeros((30, 2)))
        res = complete_svt(obs, max_iter=1000)
        if res.fit_error < 1e-4:
            assert res.rank_estimate <= r + 1


def test_svt_needs_observations():
    with pytest.raises(ValueError):
        complete_svt(OccupancyMatrix(np.ones((3, 3)), np.zeros((3, 3)), np.zeros((3, 2))))


def test_svt_all_zero_observed():
    res = complete_svt(OccupancyMatrix(np.zeros((3, 3)), np.ones((3, 3)), np.zeros((3, 2))))
    assert not res.X_hat.any() and res.rank_estimate == 0


# -- merge -----------------------------------------------------------------------


def test_kernel_weights_normalised():
    w = kernel_weights([0.0, 10.0, 40.0], 20.0)
    assert w.sum() == pytest.approx(1.0)
    assert w[0] > w[1] > w[2]
    np.testing.assert_allclose(kernel_weights([1e6, 2e6], 1.0), [1.0, 0.0])


@given(st.lists(st.floats(0, 500), min_size=1, max_size=8), st.floats(1.0, 100.0))
def test_kernel_weights_sum_to_one(d, h):
    assert kernel_weights(d, h).sum() == pytest.approx(1.0)


def test_single_cluster_merge_is_identity():
    X = np.random.default_rng(9).random((5, 3))
    g = AnchorGrid(np.array([[0.0, 0.0]]), 10.0)
    res = CompletionResult(X, 1, 0.0, 1, columns=np.arange(3))
    out = merge_global([res], g, np.zeros((3, 2)))
    np.testing.assert_array_equal(out.values, X)


def test_equidistant_node_averages_two_predictions():
    g = AnchorGrid(np.array([[0.0, 0.0], [10.0, 0.0]]), 10.0)
    a, b = np.array([1.0, 0.0, 2.0]), np.array([0.0, 1.0, 4.0])
    own = CompletionResult(a[:, None], 1, 0.0, 1, columns=np.array([0]))
    other = CompletionResult(np.zeros((3, 1)), 0, 0.0, 1, columns=np.array([1]))
    pos = np.array([[5.0, 0.0], [10.0, 0.0]])
    out = merge_global([own, other], g, pos, neighbor_predictions={(1, 0): b})
    np.testing.assert_allclose(out.values[:, 0], (a + b) / 2)
    # without a neighbour prediction the own-cluster value is reused
    cheap = merge_global([own, other], g, pos)
    np.testing.assert_allclose(cheap.values[:, 0], a)


def test_merge_requires_coverage():
    g = AnchorGrid(np.array([[0.0, 0.0]]), 10.0)
    res = CompletionResult(np.ones((2, 1)), 1, 0.0, 1, columns=np.array([0]))
    with pytest.raises(ValueError):
        merge_global([res], g, np.zeros((2, 2)))


def test_local_completion_single_anchor_equals_global():
    rng = np.random.default_rng(10)
    M = np.outer(rng.random(15), rng.random(8))
    obs = OccupancyMatrix(M, rng.random(M.shape) < 0.7, rng.uniform(0, 5, (8, 2)))
    g = build_anchor_grid((0, 0, 5, 5), 50.0)
    np.testing.assert_allclose(complete_local(obs, g).values, complete_global(obs).values, atol=1e-12)


def test_boundary_refinement_runs():
    rng = np.random.default_rng(11)
    M = (rng.random((12, 10)) < 0.3).astype(float)
    pos = np.column_stack([np.linspace(0, 140, 10), np.full(10, 10.0)])
    obs = OccupancyMatrix(M, rng.random(M.shape) < 0.8, pos)
    g = build_anchor_grid((0, 0, 141, 20), 50.0)
    out = complete_local(obs, g, refine_boundary=True)
    assert out.values.shape == M.shape and np.isfinite(out.values).all()


# -- binarise --------------------------------------------------------------------


def test_binarize_examples():
    assert not binarize_occupancy(np.zeros((3, 4))).any()
    assert binarize_occupancy(np.full((2, 2), 0.1), theta=0.0).all()
    with pytest.raises(ValueError):
        binarize_occupancy(np.ones(2), theta=-1.0)


def test_binarize_default_threshold_from_observed():
    obs = OccupancyMatrix(np.array([[2.0, 0.0], [4.0, 6.0]]), np.array([[1, 1], [1, 0]]), np.zeros((2, 2)))
    # observed nonzeros 2, 4 -> median 3 -> theta 1.5
    np.testing.assert_array_equal(binarize_occupancy([[1.4, 1.6], [0, 9]], observed=obs), [[0, 1], [0, 1]])


def test_binarize_noisy_planted_matrix():
    rng = np.random.default_rng(12)
    B = (rng.random((200, 200)) < 0.3).astype(float)
    err = np.mean(binarize_occupancy(B + 0.05 * rng.standard_normal(B.shape), 0.5) != B)
    assert err < 0.01
