import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lepfer.confidence import triangle_confidence
from lepfer.evaluation import (
    SWEEP_COLUMNS, ConfusionMatrix, auc, oob_evaluate, occlusion_sweep, rows_to_csv,
)
from lepfer.forest import TrainConfig, train_ls_rf, train_rs_rf
from lepfer.lep import field_from_votes, weighted_aggregate


def pair_count_auc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_auc_examples():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]).auc == 1.0
    assert auc([0.3] * 6, [0, 1, 0, 1, 1, 0]).auc == 0.5
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [1, 1])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_auc_matches_pair_counting(seed):
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 6, 20) / 5.0 if seed % 2 else rng.normal(size=20)
    y = rng.integers(0, 2, 20)
    y[:2] = [0, 1]
    assert abs(auc(s, y).auc - pair_count_auc(s, y)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_auc_rank_invariant_and_staircase(seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=30)
    y = rng.integers(0, 2, 30)
    y[:2] = [0, 1]
    r = auc(s, y)
    assert auc(np.exp(3 * s) + 7, y).auc == r.auc
    assert 0 <= r.auc <= 1
    assert np.all(np.diff(r.fpr) >= 0) and np.all(np.diff(r.tpr) >= 0)
    assert r.fpr[-1] == 1 and r.tpr[-1] == 1
    # trapezoid area under the staircase agrees with the rank statistic
    assert abs(np.sum(np.diff(r.fpr) * (r.tpr[1:] + r.tpr[:-1]) / 2) - r.auc) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_confusion_trace_over_total(seed):
    rng = np.random.default_rng(seed)
    t, p = rng.integers(0, 4, 50), rng.integers(0, 4, 50)
    cm = ConfusionMatrix.from_predictions(t, p, 4, "abcd")
    assert cm.accuracy == np.trace(cm.counts) / cm.total == np.mean(t == p)
    rows = cm.percentages.sum(axis=1)
    assert np.all((np.abs(rows - 100) <= 0.1) | (cm.counts.sum(axis=1) == 0))
    assert len(cm.to_text().splitlines()) == 5


def test_all_in_bag_excludes_everything(small_ds):
    f = train_ls_rf(small_ds, TrainConfig(n_trees=1, subject_fraction=1.0), seed=0)
    r = oob_evaluate(f, small_ds)
    assert r.n_evaluated == 0 and r.n_excluded == len(small_ds)
    assert np.isnan(r.accuracy)
    assert np.all(r.predictions == -1)


def test_oob_uses_only_oob_trees(small_forest, small_ds):
    r = oob_evaluate(small_forest, small_ds)
    ctx = small_ds.context(small_forest.mesh)
    leaf = small_forest.predict_classes(ctx)
    for i, s in enumerate(small_ds.subjects):
        use = [t for t, tree in enumerate(small_forest.trees) if s in tree.oob_subjects]
        assert all(s not in small_forest.trees[t].inbag_subjects for t in use)
        if not use:
            assert r.predictions[i] == -1
            continue
        p = np.bincount(leaf[i, use], minlength=7) / len(use)
        np.testing.assert_allclose(r.probabilities[i], p, atol=1e-15)
    assert r.n_evaluated + r.n_excluded == len(small_ds)
    assert r.confusion.total == r.n_evaluated


def test_weighted_oob_matches_formula(small_forest, small_ds):
    rng = np.random.default_rng(0)
    alpha = rng.uniform(0.05, 1, (len(small_ds), small_forest.mesh.n_triangles))
    r = oob_evaluate(small_forest, small_ds, "confidence", triangle_alpha=alpha)
    ctx = small_ds.context(small_forest.mesh)
    leaf = small_forest.predict_classes(ctx)
    M = small_forest.mask_matrix
    for i, s in enumerate(small_ds.subjects[:10]):
        use = small_forest.usable_trees(s)
        if len(use) == 0:
            continue
        f = field_from_votes(np.eye(7)[leaf[i, use]], M[use])
        np.testing.assert_allclose(r.probabilities[i], weighted_aggregate(f, alpha[i]).probs, atol=1e-14)
    flat = oob_evaluate(small_forest, small_ds, "confidence", triangle_alpha=np.ones_like(alpha))
    plain = oob_evaluate(small_forest, small_ds)
    np.testing.assert_allclose(flat.probabilities, plain.probabilities, atol=1e-12)
    np.testing.assert_array_equal(flat.predictions, plain.predictions)


def test_total_occlusion_falls_back(small_forest, small_ds):
    zero = np.zeros((len(small_ds), small_forest.mesh.n_triangles))
    r = oob_evaluate(small_forest, small_ds, "confidence", triangle_alpha=zero)
    assert r.n_fallback == r.n_evaluated > 0
    np.testing.assert_array_equal(r.predictions, oob_evaluate(small_forest, small_ds).predictions)


def test_bad_weighting(small_forest, small_ds):
    with pytest.raises(ValueError):
        oob_evaluate(small_forest, small_ds, "median")
    with pytest.raises(ValueError):
        oob_evaluate(small_forest, small_ds, "confidence")


class _FlatNetwork:
    """Stand-in network: every landmark fully trusted."""

    def point_errors(self, d):
        return np.zeros(len(d))

    def point_confidence(self, e):
        return np.ones_like(e)


def test_sweep_rows_and_clean_column(small_forest, small_ds):
    rs = train_rs_rf(small_ds, TrainConfig(n_trees=6), seed=1)
    ls2 = train_ls_rf(small_ds, TrainConfig(n_trees=6, locality=0.3), seed=1)
    rows = occlusion_sweep({0.1: small_forest, 0.3: ls2}, small_ds, rs, _FlatNetwork(),
                           regions=("none", "mouth"), margin=3)
    assert len(rows) == 3 * 2 * 2
    clean = {(r["variant"], r["R"]): r["accuracy"] for r in rows if r["region"] == "none"}
    assert clean[("ls", 0.1)] == oob_evaluate(small_forest, small_ds).accuracy
    assert clean[("rs", 0.3)] == oob_evaluate(rs, small_ds).accuracy
    assert clean[("wls", 0.1)] == clean[("ls", 0.1)]
    text = rows_to_csv(rows)
    assert text.splitlines()[0] == ",".join(SWEEP_COLUMNS)
    assert len(text.splitlines()) == 13
    with pytest.raises(ValueError):
        occlusion_sweep({}, small_ds)
    with pytest.raises(ValueError):
        occlusion_sweep({0.1: small_forest}, small_ds, regions=())
