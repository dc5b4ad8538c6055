import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import reference
from conftest import random_transform
from sgor.config import PipelineConfig
from sgor.consistency import (ConsistencyWorkspace, batched_global_scores, filter_group,
                              geometric_consistency, global_weights, majority_labels,
                              neighborhood_majority_label, pairwise_distance_score,
                              semantic_consistency, top_k_row, estimate_local_transforms)
from sgor.core import CorrespondenceSet, SemanticPointCloud, apply_transform
from sgor.correspond import group_knn, spectral_sample
from sgor.errors import AllZeroRow, NoCandidates
from sgor.metrics import rotation_error, translation_error
from sgor.synth import generate_scene_pair, make_correspondences, urban_scene


def _pairs(p, q, sl=None, tl=None):
    n = len(p)
    src = SemanticPointCloud(np.asarray(p, float), np.zeros(n, int) if sl is None else sl)
    tgt = SemanticPointCloud(np.asarray(q, float), np.zeros(n, int) if tl is None else tl)
    return CorrespondenceSet.from_indices(np.arange(n), np.arange(n), src, tgt), src, tgt


def _random_instance(rng, w=6, k=4, n_labels=4):
    truth = random_transform(rng)
    p = rng.uniform(-1.5, 1.5, size=(w, 3))
    q = apply_transform(p, truth) + rng.normal(0, 0.3, size=(w, 3))
    sl = rng.integers(0, n_labels, w)
    tl = np.where(rng.uniform(size=w) < 0.6, sl, rng.integers(0, n_labels, w))
    group = rng.choice(w, k, replace=False)
    return p, q, sl, tl, group


def _ref(p, q, sl, tl, sm, tm, group, sigma, k1, semantic="loose"):
    return reference.chain([tuple(x) for x in p], [tuple(x) for x in q], list(group), sigma,
                           list(sl), list(tl), list(sm), list(tm), k1, semantic)


# --- distance score -------------------------------------------------------------

def test_distance_score_examples():
    g, s, t = _pairs([[0, 0, 0], [3, 0, 0]], [[0, 0, 0], [0, 5, 0]])
    assert pairwise_distance_score(g[0], g[0], s, t) == 0.0
    assert pairwise_distance_score(g[0], g[1], s, t) == pytest.approx(2.0, abs=1e-15)


def test_distance_score_zero_for_rigid_inliers(rng):
    p = rng.normal(size=(5, 3))
    g, s, t = _pairs(p, apply_transform(p, random_transform(rng)))
    assert max(pairwise_distance_score(g[i], g[j], s, t) for i in range(5) for j in range(5)) < 1e-12


# --- geometric consistency ------------------------------------------------------

def test_two_rigid_pairs_give_all_fours():
    p = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    g, s, t = _pairs(p, p + 2.0)
    ws = geometric_consistency([0, 1], g, s, t, 0.6)
    assert ws.m_g.tolist() == [[1, 1], [1, 1]]
    assert ws.w_m.tolist() == [[1, 1], [1, 1]]
    assert ws.m_g_star.tolist() == [[4, 4], [4, 4]]


def test_perturbed_member_zeroes_its_row_and_column(rng):
    p = rng.uniform(-1, 1, size=(5, 3))
    q = p.copy()
    p[2] += [10.0, 0, 0]
    g, s, t = _pairs(p, q)
    ws = geometric_consistency([0, 1, 2, 3], g, s, t, 0.6)
    off = np.delete(np.arange(4), 2)
    assert np.all(ws.m_g_star[2, off] == 0) and np.all(ws.m_g_star[off, 2] == 0)
    # d_ii = 0, so the member stays consistent with itself alone
    assert ws.m_g_star[2, 2] == 1.0
    assert np.all(np.delete(np.delete(ws.m_g_star, 2, 0), 2, 1) > 0)


@pytest.mark.parametrize("restrict", [False, True])
@pytest.mark.parametrize("precomputed", [False, True])
def test_geometric_matrices_equal_dense_oracle(rng, restrict, precomputed):
    for _ in range(5):
        p, q, sl, tl, group = _random_instance(rng)
        g, s, t = _pairs(p, q, sl, tl)
        w_full = global_weights(g, s, t, 0.6) if precomputed else None
        ws = geometric_consistency(group, g, s, t, 0.6, restrict, w_full)
        ref = _ref(p, q, sl, tl, sl, tl, group, 0.6, 2)
        np.testing.assert_allclose(ws.m_g, ref["m_g"], rtol=0, atol=0)
        np.testing.assert_allclose(ws.m_g_star, ref["m_g_star"], rtol=0, atol=1e-12)
        full_gp = np.array(ref["m_g_prime"])
        full_w = np.array(ref["w_m"])
        np.testing.assert_allclose(ws.m_g_prime, full_gp[:, ws.support], rtol=0, atol=0)
        np.testing.assert_allclose(ws.w_m, full_w[np.ix_(ws.support, ws.support)], rtol=0, atol=1e-12)
        if restrict:
            assert np.all(full_gp[:, np.setdiff1d(np.arange(len(p)), ws.support)] == 0)


def test_batched_scores_equal_dense_products(rng):
    w = 120
    truth = random_transform(rng)
    p = rng.uniform(-3, 3, size=(w, 3))
    q = apply_transform(p, truth)
    q[60:] = rng.uniform(-3, 3, size=(60, 3))
    g, s, t = _pairs(p, q)
    groups = np.stack([rng.choice(w, 9, replace=False) for _ in range(13)])
    batched = batched_global_scores(groups, g, s, t, 0.6, block=32)
    for n, grp in enumerate(groups):
        ws = geometric_consistency(grp, g, s, t, 0.6)
        np.testing.assert_allclose(batched[n] * ws.m_g, ws.m_g_star, rtol=1e-12, atol=1e-9)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_geometric_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    p, q, sl, tl, group = _random_instance(rng, w=10, k=5)
    a = geometric_consistency(group, *_pairs(p, q), 0.6)
    moved = random_transform(rng)
    b = geometric_consistency(group, *_pairs(apply_transform(p, moved), apply_transform(q, moved)), 0.6)
    # the indicator can only flip where d_ij sits on the σ_d boundary to within rounding
    d_margin = np.abs(np.array([[abs(np.linalg.norm(p[i] - p[j]) - np.linalg.norm(q[i] - q[j]))
                                 for j in range(10)] for i in range(10)]) - 0.6)
    if d_margin.min() < 1e-9:
        return
    assert np.array_equal(a.m_g, b.m_g)
    np.testing.assert_allclose(a.w_m, b.w_m, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a.m_g_star, b.m_g_star, rtol=1e-12, atol=1e-12)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_workspace_symmetry_and_diagonals(seed):
    rng = np.random.default_rng(seed)
    p, q, sl, tl, group = _random_instance(rng, w=12, k=6)
    ws = geometric_consistency(group, *_pairs(p, q), 0.6)
    assert np.array_equal(ws.m_g, ws.m_g.T) and np.all(np.diag(ws.m_g) == 1)
    assert np.array_equal(ws.w_m, ws.w_m.T) and np.all(np.diag(ws.w_m) == 1)
    np.testing.assert_allclose(ws.m_g_star, ws.m_g_star.T, rtol=1e-13, atol=0)


# --- majority labels -------------------------------------------------------------

def test_majority_all_same():
    c = SemanticPointCloud(np.random.default_rng(0).normal(size=(8, 3)) * 0.1, np.full(8, 3))
    assert neighborhood_majority_label(c, 0, 1.0) == 3


def test_majority_overrides_own_label():
    rng = np.random.default_rng(1)
    pts = np.vstack([[0, 0, 0], rng.uniform(-0.3, 0.3, size=(10, 3))])
    c = SemanticPointCloud(pts, np.array([7] + [2] * 10))
    assert neighborhood_majority_label(c, 0, 1.0) == 2


def test_majority_tie_takes_smallest_label():
    c = SemanticPointCloud(np.zeros((4, 3)), np.array([5, 5, 3, 3]))
    assert neighborhood_majority_label(c, 0, 0.5) == 3


def test_majority_equals_brute_force(rng):
    pts = rng.uniform(-3, 3, size=(100, 3))
    labels = rng.integers(0, 5, 100)
    c = SemanticPointCloud(pts, labels)
    got = majority_labels(c, np.arange(100), 1.2)
    want = [reference.majority_label(pts.tolist(), labels.tolist(), i, 1.2) for i in range(100)]
    assert got.tolist() == want


def test_majority_radius_must_be_positive():
    with pytest.raises(ValueError):
        neighborhood_majority_label(SemanticPointCloud(np.zeros((1, 3)), [1]), 0, 0.0)


# --- semantic consistency ---------------------------------------------------------

def test_identical_labels_pass_everything():
    m_s, m_sp, m_ss = semantic_consistency([4, 4], [4, 4], [4, 4], [4, 4])
    assert m_s.tolist() == m_sp.tolist() == m_ss.tolist() == [[1, 1], [1, 1]]


def test_loose_rescue():
    # correspondence 0: point labels differ, neighbourhood majorities agree
    m_s, m_sp, m_ss = semantic_consistency([1, 2], [5, 2], [2, 2], [2, 2])
    assert m_s[0].tolist() == [0, 0] and m_s[:, 0].tolist() == [0, 0]
    assert m_sp[0].tolist() == [1, 1]
    assert m_ss[0].tolist() == [1, 1]


def test_semantic_matrices_equal_brute_force(rng):
    for _ in range(20):
        sl, tl = rng.integers(0, 4, 8), rng.integers(0, 4, 8)
        sm, tm = rng.integers(0, 4, 8), rng.integers(0, 4, 8)
        p = rng.normal(size=(8, 3))
        ref = _ref(p, p, sl, tl, sm, tm, range(8), 0.6, 3)
        m_s, m_sp, m_ss = semantic_consistency(sl, tl, sm, tm)
        assert m_s.tolist() == ref["m_s"]
        assert m_sp.tolist() == ref["m_s_prime"]
        assert m_ss.tolist() == ref["m_s_star"]


@given(st.lists(st.tuples(*[st.integers(0, 3)] * 4), min_size=1, max_size=10))
def test_semantic_symmetry_and_or_dominance(rows):
    sl, tl, sm, tm = (np.array(col) for col in zip(*rows))
    m_s, m_sp, m_ss = semantic_consistency(sl, tl, sm, tm)
    for m in (m_s, m_sp, m_ss):
        assert np.array_equal(m, m.T)
    assert np.all(m_ss >= m_s) and np.all(m_ss >= m_sp)
    # a diagonal entry is 1 exactly when that correspondence's own labels agree
    assert np.array_equal(np.diag(m_s), (sl == tl).astype(float))


# --- top-k and filtering -------------------------------------------------------------

def _ws_from_row(row):
    k = len(row)
    m = np.zeros((k, k))
    m[0] = row
    m[:, 0] = row
    return ConsistencyWorkspace(np.arange(k) + 100, np.arange(k), np.ones((k, k)), np.zeros((k, 0)),
                                np.zeros((0, 0)), m)


def test_top_k_example():
    cols, w = top_k_row(np.array([4.0, 4.0, 0.0, 2.0]), 2)
    assert cols.tolist() == [0, 1]
    np.testing.assert_allclose(w, [0.5, 0.5], rtol=0, atol=1e-15)


def test_top_k_all_members_proportional():
    row = np.array([3.0, 1.0, 2.0, 4.0])
    fg = filter_group(_ws_from_row(row), 4, semantic="off")
    assert sorted(fg.members.tolist()) == [100, 101, 102, 103]
    got = dict(zip(fg.members.tolist(), fg.weights.tolist()))
    for j in range(4):
        assert got[100 + j] == pytest.approx(row[j] / row.sum(), abs=1e-15)


def test_top_k_matches_sort_oracle(rng):
    for _ in range(50):
        row = rng.choice([0.0, 1.0, 2.5, 3.0, 7.0], size=10)
        row[0] = 5.0
        cols, w = top_k_row(row, 5)
        ranked = sorted(range(10), key=lambda j: (-row[j], j))[:5]
        kept = [j for j in ranked if row[j] > 0]
        assert cols.tolist() == kept
        np.testing.assert_allclose(w, row[kept] / row[kept].sum(), rtol=0, atol=1e-15)
        assert w.sum() == pytest.approx(1.0, abs=1e-9)


def test_all_zero_row_raises():
    with pytest.raises(AllZeroRow):
        top_k_row(np.zeros(5), 3)


def test_k1_bounds():
    with pytest.raises(ValueError):
        filter_group(_ws_from_row(np.ones(4)), 5)
    with pytest.raises(ValueError):
        filter_group(_ws_from_row(np.ones(4)), 2)


@pytest.mark.parametrize("semantic", ["off", "tight", "loose"])
def test_full_chain_equals_reference(rng, semantic):
    for _ in range(10):
        p, q, sl, tl, group = _random_instance(rng, w=10, k=6)
        g, s, t = _pairs(p, q, sl, tl)
        sm = np.where(rng.uniform(size=10) < 0.5, sl, tl)
        tm = np.where(rng.uniform(size=10) < 0.5, sl, tl)
        ws = geometric_consistency(group, g, s, t, 0.6, restrict=True)
        ws.m_s, ws.m_s_prime, ws.m_s_star = semantic_consistency(sl[group], tl[group], sm[group], tm[group])
        ref = _ref(p, q, sl, tl, sm, tm, group, 0.6, 3, semantic)
        try:
            fg = filter_group(ws, 3, semantic=semantic)
        except AllZeroRow:
            assert not ref["kept"]
            continue
        np.testing.assert_allclose(ws.m_star, ref["m_star"], rtol=0, atol=1e-12)
        assert fg.members.tolist() == [group[j] for j in ref["kept"]]
        np.testing.assert_allclose(fg.weights, ref["weights"], rtol=0, atol=1e-12)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_masking_monotonicity(seed):
    rng = np.random.default_rng(seed)
    p, q, sl, tl, group = _random_instance(rng, w=10, k=6)
    g, s, t = _pairs(p, q, sl, tl)
    ws = geometric_consistency(group, g, s, t, 0.6)
    ws.m_s, ws.m_s_prime, ws.m_s_star = semantic_consistency(sl[group], tl[group], sl[group], tl[group])
    try:
        filter_group(ws, 3)
    except AllZeroRow:
        return
    assert np.all(ws.m_star <= ws.m_g_star)
    before = ws.m_star.copy()
    ones = np.argwhere(ws.m_s_star == 1)
    i, j = ones[rng.integers(len(ones))]
    ws.m_s_star[i, j] = ws.m_s_star[j, i] = 0
    try:
        filter_group(ws, 3)
    except AllZeroRow:
        return
    assert np.all(ws.m_star <= before)
    np.testing.assert_allclose(ws.m_star, ws.m_star.T, rtol=1e-13, atol=0)


# --- local transforms ---------------------------------------------------------------

def _stage(pair, g, config):
    seeds = spectral_sample(g, pair.source, pair.target, config.n_seeds, config.sigma_d)
    groups = group_knn(g, seeds, pair.source, config.k)
    return estimate_local_transforms(groups, pair.source, pair.target, config)


def _best_re(cands, gt):
    return min(rotation_error(c.candidate.rotation, gt.rotation) for c in cands)


def test_all_inliers_noise_free_candidates_are_exact():
    pair = generate_scene_pair(urban_scene(3, noise_sigma=0.0), (60.0, 5.0))
    g, _ = make_correspondences(pair, 300, 1.0, seed=3)
    cands = _stage(pair, g, PipelineConfig(n_seeds=20))
    assert cands
    for c in cands:
        assert rotation_error(c.candidate.rotation, pair.gt.rotation) < 0.1
        assert translation_error(c.candidate.translation, pair.gt.translation) < 0.1
        assert c.weights.sum() == pytest.approx(1.0, abs=1e-9)
        assert c.members[0] == c.seed or c.seed in c.members


def test_heavy_outliers_leave_a_good_candidate():
    pair = generate_scene_pair(urban_scene(4), (180.0, 10.0))
    g, _ = make_correspondences(pair, 500, 0.2, seed=4)
    cands = _stage(pair, g, PipelineConfig())
    good = [c for c in cands
            if rotation_error(c.candidate.rotation, pair.gt.rotation) < 2.0
            and translation_error(c.candidate.translation, pair.gt.translation) < 10.0]
    assert good


def test_geometric_only_is_no_better_than_full():
    for seed in range(5):
        pair = generate_scene_pair(urban_scene(20 + seed), (180.0, 10.0))
        g, _ = make_correspondences(pair, 250, 0.1, seed=seed)
        full = _best_re(_stage(pair, g, PipelineConfig()), pair.gt)
        geo = _best_re(_stage(pair, g, PipelineConfig().with_variant("geometric-only")), pair.gt)
        assert geo >= full - 1e-9, (seed, geo, full)


def test_no_candidates_when_every_row_is_zero():
    p = np.random.default_rng(0).uniform(-1, 1, size=(6, 3))
    sl = np.arange(6)
    g, s, t = _pairs(p, p, sl, (sl + 1) % 6)
    config = PipelineConfig(k=4, k1=3, n_seeds=2, semantic="tight")
    groups = group_knn(g, [0, 1], s, 4)
    with pytest.raises(NoCandidates):
        estimate_local_transforms(groups, s, t, config)
