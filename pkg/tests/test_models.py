import json

import numpy as np
import pytest

from ethbias.dataset import LabeledDataset
from ethbias.models import (BoostParams, MlpParams, TreeParams, default_params, fit_adaboost, fit_forest,
                            fit_gboost, fit_mlp, fit_model, fit_tree, load_model, predict, save_model, with_seed)
from ethbias.models.base import KINDS
from ethbias.models.ensemble import log_loss
from ethbias.models.mlp import forward, init_weights, loss_and_grad
from ethbias.models.tree import balanced_weights, grow_tree


def make(X, y, acts=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(X)
    acts = acts or tuple("M" if v else "benign" for v in y)
    return LabeledDataset(tuple(f"x{i}" for i in range(n)), X, np.asarray(y), tuple(acts), ("synthetic",) * n)


def blobs(n=30, d=4, sep=4.0, seed=0):
    rng = np.random.default_rng(seed)
    y = np.array([i % 2 for i in range(n)])
    X = rng.normal(size=(n, d)) + sep * y[:, None]
    return make(X, y)


XOR = make([[0, 0], [0, 1], [1, 0], [1, 1]] * 3, [0, 1, 1, 0] * 3)


def acc(model, d):
    return float(np.mean(model.predict_labels(d.X) == d.y))


# trees

def test_tree_1d_threshold():
    d = make(np.linspace(-1, 1, 20), (np.linspace(-1, 1, 20) > 0).astype(int))
    m = fit_tree(d)
    assert m.tree.depth() == 1 and acc(m, d) == 1.0
    assert m.tree.threshold[0] == pytest.approx((np.linspace(-1, 1, 20)[9] + np.linspace(-1, 1, 20)[10]) / 2)


def test_tree_xor_needs_depth_two():
    m = fit_tree(XOR)
    assert acc(m, XOR) == 1.0 and m.tree.depth() >= 2
    assert acc(fit_tree(XOR, TreeParams(max_depth=1)), XOR) < 1.0


@pytest.mark.parametrize("criterion", ["gini", "entropy"])
def test_tree_min_leaf_n_gives_majority(criterion):
    d = make(np.arange(10), [1, 1, 1, 0, 0, 0, 0, 0, 0, 0])
    m = fit_tree(d, TreeParams(criterion=criterion, min_samples_leaf=10))
    assert m.tree.n_nodes == 1
    assert m.predict_labels(d.X).tolist() == [0] * 10
    # balanced weights flip the weighted majority: 3 * 10/6 vs 7 * 10/14
    mb = fit_tree(d, TreeParams(criterion=criterion, min_samples_leaf=10, class_weight="balanced"))
    assert mb.malicious_score(d.X)[0] == pytest.approx(0.5)


def test_tree_single_class_rejected():
    with pytest.raises(ValueError):
        fit_tree(make([1, 2, 3], [1, 1, 1]))


def test_balanced_equals_duplication():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(16, 3))
    y = np.array([1] * 4 + [0] * 12)
    weighted = grow_tree(X, y, balanced_weights(y), criterion="gini")
    dup = np.concatenate([np.repeat(np.arange(4), 3), np.arange(4, 16)])
    plain = grow_tree(X[dup], y[dup], None, criterion="gini")
    assert weighted.feature.tolist() == plain.feature.tolist()
    np.testing.assert_allclose(weighted.threshold, plain.threshold)
    np.testing.assert_allclose(weighted.value, plain.value)


def test_balanced_weights_values():
    assert balanced_weights([1, 0, 0, 0]).tolist() == [2.0, 2 / 3, 2 / 3, 2 / 3]


# forests

def test_forest_collapses_to_tree():
    d = blobs()
    p = TreeParams(n_estimators=1, max_samples=1.0, max_features=1.0, bootstrap=False)
    f = fit_forest(d, p, "bagging_rf")
    t = fit_tree(d, p)
    assert f.predict_labels(d.X).tolist() == t.predict_labels(d.X).tolist()


def test_forest_not_worse_than_tree_on_blobs():
    train, test = blobs(30, seed=1), blobs(200, seed=2)
    tree = fit_tree(train)
    rf = fit_forest(train, with_seed(default_params("rf"), 3), "bagging_rf")
    assert acc(rf, test) >= acc(tree, test)


@pytest.mark.parametrize("mode", ["bagging_rf", "extra"])
def test_forest_deterministic(mode):
    d = blobs()
    a = fit_forest(d, TreeParams(n_estimators=15, seed=9), mode)
    b = fit_forest(d, TreeParams(n_estimators=15, seed=9), mode)
    assert np.array_equal(a.malicious_score(d.X), b.malicious_score(d.X))


def test_forest_score_is_vote_fraction():
    d = blobs()
    f = fit_forest(d, TreeParams(n_estimators=7), "extra")
    s = f.malicious_score(d.X)
    assert np.allclose(s * 7, np.round(s * 7))


def test_bad_forest_mode():
    with pytest.raises(ValueError):
        fit_forest(blobs(), TreeParams(), "boosted")


# boosting

def test_adaboost_separable_stops_at_once():
    x = np.linspace(-1, 1, 20)
    m = fit_adaboost(make(x, (x > 0).astype(int)), rounds=10)
    assert len(m.alphas) == 1 and m.meta["errors"] == [0.0]


def test_adaboost_weights_normalized():
    m = fit_adaboost(blobs(40, sep=1.0), rounds=20)
    assert all(abs(s - 1.0) < 1e-12 for s in m.meta["weight_sums"])


def test_adaboost_exponential_bound():
    d = blobs(20, sep=1.0, seed=3)
    m = fit_adaboost(d, rounds=15)
    ys = np.where(d.y == 1, 1.0, -1.0)
    bound_prev = np.inf
    for F, eps in zip(m.staged_decision(d.X), m.meta["errors"]):
        bound = float(np.mean(np.exp(-ys * F)))
        assert float(np.mean(np.sign(F) != ys)) <= bound + 1e-12
        assert bound <= bound_prev + 1e-12
        bound_prev = bound


def test_adaboost_round_weight():
    m = fit_adaboost(blobs(40, sep=1.0), rounds=5)
    for a, e in zip(m.alphas, m.meta["errors"]):
        assert a == pytest.approx(0.5 * np.log((1 - e) / e))


def test_gboost_zero_rounds_predicts_prior():
    d = make(np.arange(10), [1, 1, 1, 0, 0, 0, 0, 0, 0, 0])
    m = fit_gboost(d, rounds=0)
    assert m.malicious_score(d.X) == pytest.approx(np.full(10, 0.3))
    assert m.predict_labels(d.X).tolist() == [0] * 10


def test_gboost_loss_non_increasing():
    d = blobs(30, sep=1.0)
    m = fit_gboost(d, rounds=30)
    L = m.meta["train_loss"]
    assert all(b <= a + 1e-12 for a, b in zip(L, L[1:]))
    assert L[-1] == pytest.approx(log_loss(d.y, m.raw(d.X)))


def test_gboost_zero_learning_rate():
    d = blobs()
    m = fit_gboost(d, rounds=5, learning_rate=0.0)
    assert np.ptp(m.malicious_score(d.X)) == 0


# MLP

def test_gradient_check():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(3, 5))
    y = np.array([0.0, 1.0, 1.0])
    params = init_weights([5, 4, 3, 1], rng)
    for p in params[1::2]:
        p += rng.normal(scale=0.1, size=p.shape)
    _, grads = loss_and_grad(params, X, y, l2=1e-2)
    h = 1e-5
    for k, p in enumerate(params):
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            lp, _ = loss_and_grad(params, X, y, l2=1e-2)
            p[idx] = old - h
            lm, _ = loss_and_grad(params, X, y, l2=1e-2)
            p[idx] = old
            num[idx] = (lp - lm) / (2 * h)
        rel = np.linalg.norm(num - grads[k]) / max(np.linalg.norm(num) + np.linalg.norm(grads[k]), 1e-12)
        assert rel < 1e-4, (k, rel)


def test_mlp_separable_blobs():
    d = blobs(200, sep=3.0)
    m = fit_mlp(d, MlpParams(seed=1))
    assert acc(m, d) >= 0.99


def test_mlp_huge_l2_goes_to_bias():
    d = blobs(60)
    m = fit_mlp(d, MlpParams(l2=1e3, epochs=400, dropout=0.0, learning_rate=0.05))
    assert max(np.abs(w).max() for w in m.weights[0::2]) < 1e-2
    s = m.malicious_score(d.X)
    assert np.ptp(s) < 1e-3


def test_mlp_inference_ignores_dropout():
    d = blobs()
    m = fit_mlp(d, MlpParams(epochs=3))
    assert np.array_equal(m.malicious_score(d.X), m.malicious_score(d.X))
    logits, _ = forward(m.weights, m._scale(d.X))
    assert np.allclose(1 / (1 + np.exp(-logits)), m.malicious_score(d.X))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_mlp_divergence_reported():
    d = blobs()
    with pytest.raises(FloatingPointError, match="epoch"):
        fit_mlp(d, MlpParams(learning_rate=1e300, epochs=5, dropout=0.0))


# shared contract

@pytest.mark.parametrize("kind", KINDS)
def test_round_trip_and_determinism(kind, tmp_path):
    d = blobs(40)
    params = default_params(kind)
    if hasattr(params, "n_estimators"):
        params = type(params)(**{**params.__dict__, "n_estimators": 10})
    a = fit_model(kind, d, with_seed(params, 5))
    b = fit_model(kind, d, with_seed(params, 5))
    assert a.to_json() == b.to_json()
    save_model(a, tmp_path / "m.json")
    c = load_model(tmp_path / "m.json")
    assert np.array_equal(a.malicious_score(d.X), c.malicious_score(d.X))
    assert c.to_json() == a.to_json()
    assert json.loads(a.to_json())["kind"] == kind


@pytest.mark.parametrize("kind", KINDS)
def test_predict_contract(kind):
    d = blobs(40)
    m = fit_model(kind, d, default_params(kind) if kind not in ("rf", "etc") else
                  type(default_params(kind))(**{**default_params(kind).__dict__, "n_estimators": 10}))
    out = predict(m, d.X)
    assert out == predict(m, d.X)
    parts = predict(m, d.X[:10]) + predict(m, d.X[10:])
    assert [k for k, _ in parts] == [k for k, _ in out]
    assert np.allclose([s for _, s in parts], [s for _, s in out], rtol=0, atol=1e-12)
    for klass, s in out:
        assert 0 <= s <= 1
        assert klass == ("malicious" if s > 0.5 else "benign")
    with pytest.raises(ValueError):
        predict(m, np.zeros((2, 3)))


def test_threshold_exactly_half_is_benign():
    d = make(np.arange(10), [1] * 5 + [0] * 5)
    m = fit_tree(d, TreeParams(min_samples_leaf=10))
    assert m.malicious_score(d.X)[0] == 0.5
    assert m.predict_labels(d.X).tolist() == [0] * 10


def test_unknown_kind():
    with pytest.raises(ValueError):
        fit_model("svm", blobs())


def test_params_validation():
    with pytest.raises(ValueError):
        TreeParams(max_features=0.0)
    with pytest.raises(ValueError):
        MlpParams(dropout=1.0)
    assert TreeParams(min_samples_split=2, min_samples_leaf=5).split_leaf_mismatch
    assert not TreeParams(min_samples_split=10, min_samples_leaf=5).split_leaf_mismatch
