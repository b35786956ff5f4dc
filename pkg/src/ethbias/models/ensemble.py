"""Tree-based classifiers: single tree, forests, AdaBoost and gradient boosting."""
from __future__ import annotations

import math

import numpy as np

from ..dataset import LabeledDataset
from .base import BoostParams, TrainedModel, TreeParams, check_train
from .tree import Tree, balanced_weights, grow_tree


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _weights(y, params: TreeParams):
    return balanced_weights(y) if params.class_weight == "balanced" else np.ones(len(y))


class DecisionTreeModel(TrainedModel):
    kind = "dt"

    def __init__(self, params, feature_count, tree: Tree, meta=None):
        super().__init__(params, feature_count, meta)
        self.tree = tree

    def decision_score(self, X):
        return self.tree.predict_value(X)

    def state(self):
        return {"tree": self.tree.to_dict()}

    @classmethod
    def from_state(cls, params, feature_count, state, meta):
        return cls(params, feature_count, Tree.from_dict(state["tree"]), meta)


def fit_tree(train: LabeledDataset, params: TreeParams = TreeParams()) -> DecisionTreeModel:
    check_train(train)
    d = train.dim
    rng = np.random.default_rng(params.seed)
    mtry = max(1, int(params.max_features * d))
    tree = grow_tree(train.X, train.y, _weights(train.y, params), criterion=params.criterion,
                     max_depth=params.max_depth, min_samples_split=params.min_samples_split,
                     min_samples_leaf=params.min_samples_leaf, max_features=mtry, rng=rng)
    return DecisionTreeModel(params, d, tree, {"seed": params.seed, "train_size": len(train)})


class ForestModel(TrainedModel):
    """Majority vote of trees; the score is the fraction of trees voting malicious."""

    def __init__(self, params, feature_count, trees, kind, meta=None):
        super().__init__(params, feature_count, meta)
        self.trees = trees
        self.kind = kind

    def decision_score(self, X):
        votes = np.zeros(len(X))
        for t in self.trees:
            votes += t.predict_value(X) > 0.5
        return votes / len(self.trees)

    def state(self):
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_state(cls, params, feature_count, state, meta, kind):
        return cls(params, feature_count, [Tree.from_dict(t) for t in state["trees"]], kind, meta)


def fit_forest(train: LabeledDataset, params: TreeParams = TreeParams(), mode: str = "bagging_rf") -> ForestModel:
    """``bagging_rf``: bootstrap rows, best split over a random feature subset.
    ``extra``: rows subsampled without replacement, one random threshold per tried feature.
    """
    if mode not in ("bagging_rf", "extra"):
        raise ValueError(f"unknown forest mode {mode!r}")
    check_train(train)
    X, y = train.X, train.y
    n, d = X.shape
    w_full = _weights(y, params)
    mtry = max(1, int(params.max_features * d))
    m = max(1, int(math.floor(params.max_samples * n + 0.5)))
    trees = []
    for i in range(params.n_estimators):
        rng = np.random.default_rng(params.seed + i)
        if mode == "extra":
            rows = np.sort(rng.choice(n, size=m, replace=False)) if m < n else np.arange(n)
        elif params.bootstrap:
            rows = np.sort(rng.integers(0, n, size=m))
        else:
            rows = np.arange(n)
        trees.append(grow_tree(X[rows], y[rows], w_full[rows], criterion=params.criterion,
                               max_depth=params.max_depth, min_samples_split=params.min_samples_split,
                               min_samples_leaf=params.min_samples_leaf, max_features=mtry,
                               random_thresholds=mode == "extra", rng=rng))
    kind = "etc" if mode == "extra" else "rf"
    return ForestModel(params, d, trees, kind, {"seed": params.seed, "train_size": n, "mode": mode})


class AdaBoostModel(TrainedModel):
    """Discrete two-class AdaBoost; score = sigmoid(2 * sum(alpha_t * h_t(x)))."""

    kind = "adaboost"

    def __init__(self, params, feature_count, stumps, alphas, prior, meta=None):
        super().__init__(params, feature_count, meta)
        self.stumps = stumps
        self.alphas = list(alphas)
        self.prior = prior  # +-1 vote used when no stump survived

    def decision_function(self, X):
        F = np.zeros(len(X))
        for t, a in zip(self.stumps, self.alphas):
            F += a * np.where(t.predict_value(X) > 0.5, 1.0, -1.0)
        if not self.stumps:
            F += 1e-3 * self.prior
        return F

    def staged_decision(self, X):
        X = self._check_X(X)
        F = np.zeros(len(X))
        for t, a in zip(self.stumps, self.alphas):
            F = F + a * np.where(t.predict_value(X) > 0.5, 1.0, -1.0)
            yield F

    def decision_score(self, X):
        return _sigmoid(2.0 * self.decision_function(X))

    def state(self):
        return {"stumps": [t.to_dict() for t in self.stumps], "alphas": [float(a) for a in self.alphas],
                "prior": self.prior, "errors": self.meta.get("errors", [])}

    @classmethod
    def from_state(cls, params, feature_count, state, meta):
        return cls(params, feature_count, [Tree.from_dict(t) for t in state["stumps"]], state["alphas"],
                   state["prior"], meta)


def fit_adaboost(train: LabeledDataset, rounds: int = 50, depth: int = 1, params: BoostParams | None = None) -> AdaBoostModel:
    params = params or BoostParams(rounds=rounds, depth=depth)
    check_train(train)
    X, y = train.X, train.y
    n = len(y)
    ys = np.where(y == 1, 1.0, -1.0)
    D = np.full(n, 1.0 / n)
    stumps, alphas, errors, weight_sums = [], [], [], []
    for _ in range(params.rounds):
        weight_sums.append(float(D.sum()))
        stump = grow_tree(X, y, D, criterion="gini", max_depth=params.depth)
        h = np.where(stump.predict_value(X) > 0.5, 1.0, -1.0)
        eps = float(D[h != ys].sum())
        if eps >= 0.5:
            break
        alpha = 0.5 * math.log((1.0 - max(eps, 1e-10)) / max(eps, 1e-10))
        stumps.append(stump)
        alphas.append(alpha)
        errors.append(eps)
        if eps == 0.0:
            break
        D = D * np.exp(-alpha * ys * h)
        D = D / D.sum()
    prior = 1.0 if y.mean() > 0.5 else -1.0
    meta = {"seed": params.seed, "train_size": n, "errors": errors, "weight_sums": weight_sums}
    return AdaBoostModel(params, X.shape[1], stumps, alphas, prior, meta)


class GradientBoostingModel(TrainedModel):
    """Additive log-odds model built from regression trees on logistic residuals."""

    kind = "gboost"

    def __init__(self, params, feature_count, f0, trees, meta=None):
        super().__init__(params, feature_count, meta)
        self.f0 = f0
        self.trees = trees

    def raw(self, X):
        F = np.full(len(X), self.f0)
        for t in self.trees:
            F += self.params.learning_rate * t.predict_value(X)
        return F

    def decision_score(self, X):
        return _sigmoid(self.raw(X))

    def state(self):
        return {"f0": float(self.f0), "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_state(cls, params, feature_count, state, meta):
        return cls(params, feature_count, state["f0"], [Tree.from_dict(t) for t in state["trees"]], meta)


def log_loss(y, F) -> float:
    """Mean logistic loss of labels y in {0,1} against log-odds F."""
    F = np.asarray(F, dtype=float)
    return float(np.mean(np.logaddexp(0.0, F) - y * F))


def fit_gboost(train: LabeledDataset, rounds: int = 100, learning_rate: float = 0.1, depth: int = 3,
               params: BoostParams | None = None) -> GradientBoostingModel:
    params = params or BoostParams(rounds=rounds, learning_rate=learning_rate, depth=depth)
    check_train(train)
    X, y = train.X, train.y.astype(float)
    p = y.mean()
    f0 = math.log(p / (1.0 - p))
    F = np.full(len(y), f0)
    trees, losses = [], [log_loss(y, F)]
    for _ in range(params.rounds):
        resid = y - _sigmoid(F)
        t = grow_tree(X, resid, criterion="mse", max_depth=params.depth)
        trees.append(t)
        F = F + params.learning_rate * t.predict_value(X)
        losses.append(log_loss(y, F))
    meta = {"seed": params.seed, "train_size": len(y), "train_loss": losses}
    return GradientBoostingModel(params, X.shape[1], f0, trees, meta)
