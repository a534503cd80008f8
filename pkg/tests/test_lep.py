import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lepfer.lep import (
    ExpressionPrediction, LepField, TotalOcclusionError, aggregate, average_votes, field_from_votes,
    field_to_global, lep_field, weighted_aggregate,
)


def random_forest_outputs(rng, T=None, Nt=None, L=None):
    T = T or int(rng.integers(1, 30))
    Nt = Nt or int(rng.integers(3, 40))
    L = L or int(rng.integers(2, 8))
    votes = np.eye(L)[rng.integers(0, L, T)]
    masks = rng.random((T, Nt)) < rng.uniform(0.05, 0.6)
    masks[np.arange(T), rng.integers(0, Nt, T)] = True  # every mask is non-empty
    return votes, masks


def brute_field(votes, masks):
    T, L = votes.shape
    Nt = masks.shape[1]
    mass = np.zeros((Nt, L))
    for t in range(T):
        size = masks[t].sum()
        for tau in range(Nt):
            if masks[t, tau]:
                mass[tau] += votes[t] / size
    z = mass.sum(axis=1)
    probs = np.array([m / zz if zz > 0 else np.zeros(L) for m, zz in zip(mass, z)])
    return probs, z


def test_single_tree_field():
    masks = np.zeros((1, 6), bool)
    masks[0, [1, 2, 4]] = True
    f = field_from_votes(np.array([[0, 0, 1.0]]), masks)
    np.testing.assert_array_equal(f.covered, masks[0])
    np.testing.assert_array_equal(f.probs[[1, 2, 4]], [[0, 0, 1]] * 3)
    np.testing.assert_allclose(f.z[[1, 2, 4]], 1 / 3)
    assert not f.probs[[0, 3, 5]].any()


def test_disagreeing_overlap_is_even():
    masks = np.array([[1, 1, 0], [0, 1, 1]], bool)
    f = field_from_votes(np.array([[1.0, 0], [0, 1.0]]), masks)
    np.testing.assert_allclose(f.probs[1], [0.5, 0.5])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_field_matches_double_loop(seed):
    votes, masks = random_forest_outputs(np.random.default_rng(seed))
    f = field_from_votes(votes, masks)
    probs, z = brute_field(votes, masks)
    np.testing.assert_allclose(f.probs, probs, atol=1e-12)
    np.testing.assert_allclose(f.z, z, atol=1e-12)
    cov = f.covered
    assert np.all(np.abs(f.probs[cov].sum(axis=1) - 1) < 1e-9)
    assert np.all((f.probs >= 0) & (f.probs <= 1)) and np.all(f.z >= 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_global_identity_and_mass(seed):
    votes, masks = random_forest_outputs(np.random.default_rng(seed))
    f = field_from_votes(votes, masks)
    T = len(votes)
    assert abs(f.z.sum() - T) < 1e-9
    np.testing.assert_allclose(field_to_global(f, T), average_votes(votes).probs, atol=1e-12, rtol=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3))
def test_constant_weights_match_average(seed, c):
    votes, masks = random_forest_outputs(np.random.default_rng(seed))
    f = field_from_votes(votes, masks)
    w = weighted_aggregate(f, np.full(f.n_triangles, c))
    avg = average_votes(votes)
    np.testing.assert_allclose(w.probs, avg.probs, atol=1e-12, rtol=0)
    assert w.label == avg.label


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-4, 1e4))
def test_weighted_matches_formula_and_scale_invariant(seed, k):
    rng = np.random.default_rng(seed)
    votes, masks = random_forest_outputs(rng)
    f = field_from_votes(votes, masks)
    w = rng.uniform(0, 1, f.n_triangles)
    num = sum(w[t] * f.z[t] * f.probs[t] for t in range(f.n_triangles))
    den = sum(w[t] * f.z[t] for t in range(f.n_triangles))
    a = weighted_aggregate(f, w)
    np.testing.assert_allclose(a.probs, num / den, atol=1e-12)
    b = weighted_aggregate(f, k * w)
    np.testing.assert_allclose(a.probs, b.probs, atol=1e-12)
    assert a.label == b.label


def test_single_mask_weights_recover_tree_vote():
    masks = np.array([[1, 1, 0, 0, 0], [0, 0, 1, 1, 0], [0, 0, 0, 1, 1]], bool)
    votes = np.eye(3)
    f = field_from_votes(votes, masks)
    w = masks[0].astype(float)
    np.testing.assert_allclose(weighted_aggregate(f, w).probs, votes[0])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_monotone_influence(seed):
    rng = np.random.default_rng(seed)
    votes, masks = random_forest_outputs(rng)
    f = field_from_votes(votes, masks)
    w = rng.uniform(0.01, 1, f.n_triangles)
    for c in range(votes.shape[1]):
        unanimous = f.covered & (f.probs[:, c] == 1.0)
        if not unanimous.any():
            continue
        raised = w.copy()
        raised[unanimous] *= rng.uniform(1, 5)
        assert weighted_aggregate(f, raised).probs[c] >= weighted_aggregate(f, w).probs[c] - 1e-15


def test_weight_validation():
    f = field_from_votes(np.eye(2), np.array([[1, 0], [0, 1]], bool))
    with pytest.raises(TotalOcclusionError):
        weighted_aggregate(f, np.zeros(2))
    with pytest.raises(ValueError):
        weighted_aggregate(f, np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        weighted_aggregate(f, np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        weighted_aggregate(f, np.ones(3))


def test_aggregate_examples():
    assert ExpressionPrediction(np.array([0.4, 0.4, 0.2])).label == 0
    assert ExpressionPrediction(np.array([0.2, 0.4, 0.4 + 1e-15])).label == 1
    assert ExpressionPrediction(np.array([0.2, 0.4, 0.4 + 1e-9])).label == 2
    np.testing.assert_array_equal(average_votes(np.tile([0, 1.0, 0], (5, 1))).probs, [0, 1, 0])
    np.testing.assert_array_equal(average_votes(np.array([[1.0, 0], [0, 1.0]])).probs, [0.5, 0.5])
    with pytest.raises(ValueError):
        average_votes(np.zeros((0, 3)))


def test_forest_field_identity(small_forest, small_ds):
    ctx = small_ds.context(small_forest.mesh)
    T = small_forest.n_trees
    for i in range(small_ds.labels.size):
        f = lep_field(small_forest, ctx, i)
        np.testing.assert_allclose(field_to_global(f, T), aggregate(small_forest, ctx, i).probs, atol=1e-12, rtol=0)
        assert abs(f.z.sum() - T) < 1e-9


def test_text_export():
    f = field_from_votes(np.array([[1.0, 0]]), np.array([[1, 0]], bool))
    lines = f.to_text(["a", "b"]).splitlines()
    assert lines[0] == "triangle a b Z"
    assert lines[1] == "0 1 0 1" and lines[2] == "1 0 0 0"
    np.testing.assert_array_equal(f.features(), [[1, 0], [0.5, 0.5]])
