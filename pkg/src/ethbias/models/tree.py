"""CART-style binary trees on numeric features.

Classification trees store the weighted fraction of positive samples in each
leaf; regression trees store the weighted mean target.  Split thresholds are
midpoints between consecutive distinct values, and equal gains go to the
lowest feature index, then the lowest threshold.
"""
from __future__ import annotations

import numpy as np

LEAF = -1
_GAIN_TIE = 1e-12


def _impurity(p, criterion):
    p = np.asarray(p, dtype=float)
    if criterion == "gini":
        return 2.0 * p * (1.0 - p)
    # entropy in bits; 0 log 0 = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log2(p) + (1.0 - p) * np.log2(1.0 - p))
    return np.nan_to_num(h, nan=0.0)


class Tree:
    """A fitted tree as flat node arrays."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=int)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=int)
        self.right = np.asarray(right, dtype=int)
        self.value = np.asarray(value, dtype=float)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.feature[node] != LEAF:
                stack += [(self.left[node], d + 1), (self.right[node], d + 1)]
        return best

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=int)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] != LEAF
        return node

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(v) for v in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": [float(v) for v in self.value],
        }

    @classmethod
    def from_dict(cls, d) -> "Tree":
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"])


def grow_tree(X, y, sample_weight=None, *, criterion="gini", max_depth=None, min_samples_split=2,
              min_samples_leaf=1, max_features=None, random_thresholds=False, rng=None) -> Tree:
    """Greedy top-down induction.

    ``criterion`` is ``gini`` or ``entropy`` (y in {0, 1}) or ``mse``
    (real y).  ``max_features`` is the number of features tried per node
    (all when None); ``random_thresholds`` draws one uniform threshold per
    tried feature instead of scanning all midpoints.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if rng is None:
        rng = np.random.default_rng(0)
    regression = criterion == "mse"
    mtry = d if max_features is None else max(1, min(d, int(max_features)))

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        wi, yi = w[idx], y[idx]
        W = wi.sum()
        S = float(np.dot(wi, yi))
        value[node] = S / W if W > 0 else 0.0
        if regression:
            parent = float(np.dot(wi, yi * yi)) - S * S / W if W > 0 else 0.0
            pure = parent <= 1e-14 * max(1.0, abs(float(np.dot(wi, yi * yi))))
        else:
            parent = W * float(_impurity(S / W, criterion)) if W > 0 else 0.0
            pure = S <= 0 or S >= W
        if (pure or len(idx) < min_samples_split or len(idx) < 2 * min_samples_leaf
                or (max_depth is not None and depth >= max_depth)):
            continue

        feats = np.arange(d) if mtry == d else np.sort(rng.choice(d, size=mtry, replace=False))
        best = None  # (gain, feature, threshold)
        for f in feats:
            xf = X[idx, f]
            if random_thresholds:
                lo, hi = xf.min(), xf.max()
                if lo == hi:
                    continue
                thr = float(rng.uniform(lo, hi))
                if thr >= hi:
                    thr = lo
                mask = xf <= thr
                nl = int(mask.sum())
                if nl < min_samples_leaf or len(idx) - nl < min_samples_leaf:
                    continue
                WL, SL = wi[mask].sum(), float(np.dot(wi[mask], yi[mask]))
                cands_WL, cands_SL = np.array([WL]), np.array([SL])
                if regression:
                    cands_QL = np.array([float(np.dot(wi[mask], yi[mask] ** 2))])
                thrs = np.array([thr])
            else:
                order = np.argsort(xf, kind="stable")
                xs = xf[order]
                ws, ys = wi[order], yi[order]
                cw = np.cumsum(ws)
                cs = np.cumsum(ws * ys)
                pos = np.arange(len(xs) - 1)
                ok = (xs[:-1] < xs[1:]) & (pos + 1 >= min_samples_leaf) & (len(xs) - pos - 1 >= min_samples_leaf)
                pos = pos[ok]
                if pos.size == 0:
                    continue
                cands_WL, cands_SL = cw[pos], cs[pos]
                if regression:
                    cands_QL = np.cumsum(ws * ys * ys)[pos]
                lo, hi = xs[pos], xs[pos + 1]
                thrs = lo + (hi - lo) / 2.0
                thrs = np.where(thrs >= hi, lo, thrs)
            WR = W - cands_WL
            SR = S - cands_SL
            valid = (cands_WL > 0) & (WR > 0)
            if not valid.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                if regression:
                    Q = float(np.dot(wi, yi * yi))
                    child = (cands_QL - cands_SL ** 2 / cands_WL) + ((Q - cands_QL) - SR ** 2 / WR)
                else:
                    child = cands_WL * _impurity(cands_SL / cands_WL, criterion) + WR * _impurity(SR / WR, criterion)
            gains = np.where(valid, parent - child, -np.inf)
            j = int(np.argmax(gains))
            g = float(gains[j])
            if best is None or g > best[0] + _GAIN_TIE * max(1.0, abs(parent)):
                best = (g, int(f), float(thrs[j]))
        if best is None or best[0] < -_GAIN_TIE * max(1.0, abs(parent)):
            continue
        _, f, thr = best
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        if len(li) == 0 or len(ri) == 0:
            continue
        feature[node], threshold[node] = f, thr
        lnode, rnode = new_node(), new_node()
        left[node], right[node] = lnode, rnode
        # right pushed first so the left subtree is numbered first
        stack.append((rnode, ri, depth + 1))
        stack.append((lnode, li, depth + 1))
    return Tree(feature, threshold, left, right, value)


def balanced_weights(y) -> np.ndarray:
    """n / (2 * n_class) per sample."""
    y = np.asarray(y, dtype=int)
    n = len(y)
    counts = np.bincount(y, minlength=2).astype(float)
    return n / (2.0 * counts[y])
