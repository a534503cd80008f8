import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lepfer.au import (
    AuForest, AuTrainConfig, SchemeMismatchError, au_confidence, extract_lep_features, heatmap,
    heatmap_table, lep_block, lep_feature_array, predict_au, root_census, train_au_forest,
)
from lepfer.evaluation import auc
from lepfer.features import PHI0
from lepfer.forest import TrainConfig, train_ls_rf
from lepfer.lep import lep_field


def test_defaults():
    cfg = AuTrainConfig()
    assert (cfg.n_trees, cfg.n_candidates, cfg.n_thresholds) == (50, 100, 25)


def test_lep_feature_lengths(small_forest, small_ds):
    ctx = small_ds.context(small_forest.mesh)
    Nt = small_forest.mesh.n_triangles
    one = extract_lep_features([small_forest], ctx, 2)
    assert one.shape == (7 * Nt,)
    two = extract_lep_features([small_forest, small_forest], ctx, 2)
    assert two.shape == (14 * Nt,)
    np.testing.assert_array_equal(two[: 7 * Nt], one)
    assert np.all((one >= 0) & (one <= 1))


def test_lep_block_matches_field_oracle(small_forest, small_ds):
    ctx = small_ds.context(small_forest.mesh)
    block = lep_block(small_forest, ctx)
    for i in range(small_ds.labels.size):
        np.testing.assert_allclose(block[i], lep_field(small_forest, ctx, i).features(), atol=1e-15)


def test_oob_lep_block_hears_only_oob_trees(small_forest, small_ds):
    ctx = small_ds.context(small_forest.mesh)
    block = lep_block(small_forest, ctx, subjects=small_ds.subjects)
    for i in (0, 7, 20):
        trees = small_forest.usable_trees(small_ds.subjects[i])
        want = lep_field(small_forest, ctx, i, trees).features() if len(trees) else np.full_like(block[i], 1 / 7)
        np.testing.assert_allclose(block[i], want, atol=1e-15)


def test_scheme_mismatch(small_forest, small_ds):
    from lepfer.data import SyntheticConfig, synth_generate
    toy = synth_generate(SyntheticConfig(scheme="toy5", n_subjects=3, samples_per_class=2, seed=0))
    other = train_ls_rf(toy, TrainConfig(n_trees=2, locality=0.5), seed=0)
    with pytest.raises(SchemeMismatchError):
        lep_feature_array([small_forest, other], small_ds.context(small_forest.mesh))


def separable_problem(seed, n=120, Nt=10, L=3):
    rng = np.random.default_rng(seed)
    F = rng.uniform(0, 1, (n, 1, Nt, L))
    y = (F[:, 0, 4, 1] > 0.5).astype(np.int8)
    subjects = np.repeat([f"s{i}" for i in range(12)], n // 12)
    tri = np.zeros((Nt, 3), np.int64)
    return F, y, subjects, tri


def test_separable_au_high_oob_auc():
    F, y, subjects, tri = separable_problem(0)
    labels = np.stack([y, np.zeros_like(y)], axis=1)
    with pytest.warns(UserWarning, match="single-class"):
        au = train_au_forest(F, labels, ["12", "99"], subjects, tri, seed=1)
    assert au.au_names == ("12",) and au.skipped == ("99",)
    s = au.oob_scores(F, subjects)[:, 0]
    assert not np.isnan(s).any()
    assert auc(s, y).auc >= 0.95
    h = heatmap(au.census[0])
    assert h[4] > 0.5


def test_au_tree_structure_and_census():
    F, y, subjects, tri = separable_problem(1, n=60)
    au = train_au_forest(F, y[:, None], ["1"], subjects, tri, AuTrainConfig(n_trees=20), seed=0)
    trees = au.trees["1"]
    assert len(trees) == 20
    rooted = 0
    for t in trees:
        split = t.kind >= 0
        assert np.all(t.kind[split] == PHI0)
        assert np.all((t.threshold[split] >= 0) & (t.threshold[split] <= 1))
        assert not set(t.oob_subjects) & set(t.inbag_subjects)
        rooted += t.kind[0] == PHI0
    assert au.census[0].sum() == rooted
    np.testing.assert_array_equal(root_census(trees, 3, 10), au.census[0])


def test_unknown_labels_are_excluded():
    F, y, subjects, tri = separable_problem(2, n=60)
    lab = y.astype(np.int8).copy()
    lab[:12] = -1
    G = F.copy()
    G[:12] = np.random.default_rng(9).uniform(0, 1, G[:12].shape)
    cfg = AuTrainConfig(n_trees=5)
    a = train_au_forest(F, lab[:, None], ["4"], subjects, tri, cfg, seed=0)
    b = train_au_forest(G, lab[:, None], ["4"], subjects, tri, cfg, seed=0)
    # features of unlabeled samples never influence the trees
    assert a.to_bytes() == b.to_bytes()


def test_prediction_is_vote_fraction():
    F, y, subjects, tri = separable_problem(3, n=60)
    au = train_au_forest(F, y[:, None], ["6"], subjects, tri, AuTrainConfig(n_trees=15), seed=0)
    v = au.votes(F)
    np.testing.assert_allclose(au.predict(F), v.mean(axis=2))
    # oracle: walk each tree by hand
    for i in (0, 5, 33):
        x = F[i].ravel()
        count = 0
        for t in au.trees["6"]:
            n = 0
            while t.kind[n] >= 0:
                l, tau, m = t.iparams[n, :3]
                val = F[i, m, tau, l]
                n = t.left[n] if val <= t.threshold[n] else t.right[n]
            count += t.leaf_class[n]
        assert predict_au(au, x)[0] == count / 15
    with pytest.raises(ValueError):
        au.predict(F[:, :, :5])


def test_unanimous_and_half_votes():
    F, y, subjects, tri = separable_problem(4, n=60)
    au = train_au_forest(F, y[:, None], ["7"], subjects, tri, AuTrainConfig(n_trees=4), seed=0)
    for t in au.trees["7"]:
        t.kind[0], t.leaf_class[0] = -1, 1
    au.__dict__.pop("_packed", None)
    assert np.all(au.predict(F) == 1.0)
    for t in au.trees["7"][:2]:
        t.leaf_class[0] = 0
    au.__dict__.pop("_packed", None)
    assert np.all(au.predict(F) == 0.5)


def test_au_confidence_examples():
    census = np.zeros((3, 6))
    census[1, 2] = 4
    alpha = np.linspace(0.1, 0.6, 6)
    assert au_confidence(census, alpha) == alpha[2]
    census[0, :] = 1
    assert abs(au_confidence(census, np.full(6, 0.42)) - 0.42) < 1e-15
    with pytest.raises(ValueError):
        au_confidence(np.zeros((3, 6)), alpha)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_au_confidence_weighted_mean(seed):
    rng = np.random.default_rng(seed)
    census = rng.integers(0, 4, (5, 9)).astype(float)
    census[0, 0] += 1
    alpha = rng.uniform(0, 1, 9)
    Nm = census.sum(axis=0)
    want = sum(alpha[t] * Nm[t] for t in range(9)) / Nm.sum()
    got = au_confidence(census, alpha)
    assert abs(got - want) < 1e-12
    active = Nm > 0
    assert alpha[active].min() - 1e-15 <= got <= alpha[active].max() + 1e-15
    assert alpha.min() <= got <= alpha.max()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_region_occlusion_lowers_concentrated_au(seed):
    rng = np.random.default_rng(seed)
    region = np.arange(4)
    census = np.zeros((2, 12))
    census[:, region] = rng.integers(1, 10, (2, 4))
    census[:, 4:] = rng.integers(0, 2, (2, 8))
    alpha = rng.uniform(0.5, 1, 12)
    occluded = alpha.copy()
    occluded[region] = rng.uniform(0, 0.01, 4)
    assert au_confidence(census, occluded) < au_confidence(census, alpha)


def test_heatmap_examples():
    N = np.zeros((2, 5))
    N[1, 3] = 7
    np.testing.assert_array_equal(heatmap(N), [0, 0, 0, 1, 0])
    N = np.random.default_rng(0).integers(0, 5, (4, 3, 8)).astype(float)
    assert np.allclose(heatmap(N).sum(axis=-1), 1, atol=1e-12)
    assert np.allclose(heatmap(N, per_label=True).sum(axis=(-2, -1)), 1, atol=1e-12)
    with pytest.raises(ValueError):
        heatmap(np.zeros((3, 4)))


def test_model_round_trip_and_table(tmp_path):
    F, y, subjects, tri = separable_problem(5, n=60)
    au = train_au_forest(F, y[:, None], ["25"], subjects, tri, AuTrainConfig(n_trees=6), seed=2)
    data = au.save(tmp_path / "au.bin")
    back = AuForest.load(tmp_path / "au.bin")
    assert back.to_bytes() == data
    np.testing.assert_array_equal(back.predict(F), au.predict(F))
    np.testing.assert_array_equal(back.oob_scores(F, subjects), au.oob_scores(F, subjects))
    again = train_au_forest(F, y[:, None], ["25"], subjects, tri, AuTrainConfig(n_trees=6), seed=2)
    assert again.to_bytes() == data
    rows = heatmap_table(au).splitlines()
    assert rows[0] == "au,triangle,proportion" and len(rows) == 1 + 10


def test_single_source_m2_equals_plain(small_forest, small_ds):
    ctx = small_ds.context(small_forest.mesh)
    stacked = lep_feature_array([small_forest], ctx, small_ds.subjects)
    plain = lep_block(small_forest, ctx, subjects=small_ds.subjects)
    np.testing.assert_array_equal(stacked[:, 0], plain)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = train_au_forest(stacked, small_ds.au_labels, small_ds.au_names, small_ds.subjects,
                            small_forest.mesh.triangles, AuTrainConfig(n_trees=5), seed=0)
        b = train_au_forest(plain[:, None], small_ds.au_labels, small_ds.au_names, small_ds.subjects,
                            small_forest.mesh.triangles, AuTrainConfig(n_trees=5), seed=0)
    assert a.to_bytes() == b.to_bytes()
