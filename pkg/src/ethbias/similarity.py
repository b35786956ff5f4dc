"""Cosine-similarity analysis between accounts and K-Means homophily clustering."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import BENIGN, LabeledDataset

log = logging.getLogger(__name__)


def standardize(X, mean=None, std=None):
    """Column z-scores; zero-variance columns map to 0. Returns (Z, mean, std)."""
    X = np.asarray(X, dtype=float)
    mean = X.mean(axis=0) if mean is None else mean
    std = X.std(axis=0) if std is None else std
    safe = np.where(std > 0, std, 1.0)
    Z = (X - mean) / safe
    Z[:, std == 0] = 0.0
    return Z, mean, std


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("undefined similarity: zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class SimilarityMatrix:
    addresses: tuple[str, ...]
    values: np.ndarray


def cosine_matrix(A, B=None) -> np.ndarray:
    """Pairwise cosine between rows of A and rows of B (B defaults to A)."""
    A = np.asarray(A, dtype=float)
    na = np.linalg.norm(A, axis=1)
    if np.any(na == 0):
        raise ValueError("undefined similarity: zero vector")
    An = A / na[:, None]
    if B is None:
        S = An @ An.T
        S = 0.5 * (S + S.T)
        np.fill_diagonal(S, 1.0)
    else:
        B = np.asarray(B, dtype=float)
        nb = np.linalg.norm(B, axis=1)
        if np.any(nb == 0):
            raise ValueError("undefined similarity: zero vector")
        S = An @ (B / nb[:, None]).T
    return np.clip(S, -1.0, 1.0)


def similarity_matrix(addresses, X) -> SimilarityMatrix:
    return SimilarityMatrix(tuple(addresses), cosine_matrix(X))


@dataclass(frozen=True)
class ActivitySimilarity:
    """``p_geq0[a, b]``: share of cross-activity account pairs with cosine >= 0.

    On the diagonal the share runs over unordered distinct pairs inside one
    activity; it is NaN when the activity has a single account.
    """

    activities: tuple[str, ...]
    p_geq0: np.ndarray
    n_pairs: np.ndarray

    @property
    def p_lt0(self) -> np.ndarray:
        return 1.0 - self.p_geq0

    @property
    def similar(self) -> np.ndarray:
        return self.p_geq0 == 1.0


def pairwise_activity_similarity(dataset: LabeledDataset, activities=None, standardize_features: bool = True,
                                 malicious_only: bool = True) -> ActivitySimilarity:
    ds = dataset.malicious() if malicious_only else dataset
    X = standardize(ds.X)[0] if standardize_features else ds.X
    counts = ds.activity_counts()
    if activities is None:
        activities = sorted(counts)
    acts = []
    for a in activities:
        if counts.get(a, 0) == 0:
            log.warning("activity %r has no accounts; excluded", a)
        else:
            acts.append(a)
    S = cosine_matrix(X)
    members = {a: np.flatnonzero(ds.activity_mask(a)) for a in acts}
    k = len(acts)
    p = np.full((k, k), np.nan)
    npairs = np.zeros((k, k), dtype=int)
    for i, a in enumerate(acts):
        for j, b in enumerate(acts):
            if j < i:
                continue
            block = S[np.ix_(members[a], members[b])]
            if i == j:
                vals = block[np.triu_indices(len(members[a]), k=1)]
            else:
                vals = block.ravel()
            npairs[i, j] = npairs[j, i] = vals.size
            if vals.size:
                p[i, j] = p[j, i] = float(np.count_nonzero(vals >= 0)) / vals.size
    return ActivitySimilarity(tuple(acts), p, npairs)


# --- K-Means ---------------------------------------------------------------

@dataclass
class ClusterAssignment:
    k: int
    labels: dict[str, int]
    centroids: np.ndarray
    inertia: float
    inertia_history: list[float] = field(default_factory=list)
    contingency: dict[str, list[int]] = field(default_factory=dict)
    cluster_rank: list[int] = field(default_factory=list)


def _kmeanspp(X, k, rng):
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total == 0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def _assign(X, C):
    d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    lab = np.argmin(d2, axis=1)
    return lab, d2[np.arange(len(X)), lab]


def _repair_empty(X, C, lab, d2):
    k = len(C)
    for c in range(k):
        if np.any(lab == c):
            continue
        sse = np.bincount(lab, weights=d2, minlength=k)
        worst = int(np.argmax(sse))
        members = np.flatnonzero(lab == worst)
        far = members[np.argmax(d2[members])]
        C[c] = X[far]
        lab, d2 = _assign(X, C)
    return C, lab, d2


def lloyd(X, init, max_iter=300, tol=0.0):
    """Lloyd iterations from given centers; returns (centers, labels, inertia, history)."""
    C = np.array(init, dtype=float)
    lab, d2 = _assign(X, C)
    C, lab, d2 = _repair_empty(X, C, lab, d2)
    history = [float(d2.sum())]
    for _ in range(max_iter):
        newC = np.array([X[lab == c].mean(axis=0) for c in range(len(C))])
        newlab, newd2 = _assign(X, newC)
        newC, newlab, newd2 = _repair_empty(X, newC, newlab, newd2)
        history.append(float(newd2.sum()))
        converged = np.array_equal(newlab, lab) and np.abs(newC - C).max() <= tol
        C, lab, d2 = newC, newlab, newd2
        if converged:
            break
    return C, lab, float(d2.sum()), history


def kmeans(X, k: int, seed: int = 0, max_iter: int = 300, restarts: int = 10):
    """Best-of-restarts Lloyd's algorithm with k-means++ seeding.

    Returns (centers, labels, inertia, inertia_history of the winning run).
    Ties in inertia go to the earliest restart.
    """
    X = np.asarray(X, dtype=float)
    n = len(X)
    if k < 1:
        raise ValueError("k must be positive")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    best = None
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        run = lloyd(X, _kmeanspp(X, k, rng), max_iter)
        if best is None or run[2] < best[2]:
            best = run
    return best


def cluster_accounts(dataset: LabeledDataset, k: int, seed: int = 0, max_iter: int = 300, restarts: int = 10,
                     standardize_features: bool = True) -> ClusterAssignment:
    """Cluster accounts and tabulate activity x cluster counts.

    Clusters are ranked by the number of malicious accounts they hold;
    ``contingency[activity][r]`` counts members of the r-th ranked cluster.
    """
    X = standardize(dataset.X)[0] if standardize_features else dataset.X
    C, lab, inertia, hist = kmeans(X, k, seed, max_iter, restarts)
    mal_per = np.bincount(lab[dataset.y == 1], minlength=k)
    size = np.bincount(lab, minlength=k)
    rank = sorted(range(k), key=lambda c: (-mal_per[c], -size[c], c))
    pos = {c: r for r, c in enumerate(rank)}
    table: dict[str, list[int]] = {}
    for act, c in zip(dataset.activities, lab):
        row = table.setdefault(act, [0] * k)
        row[pos[int(c)]] += 1
    return ClusterAssignment(
        k=k,
        labels={a: int(c) for a, c in zip(dataset.addresses, lab)},
        centroids=C,
        inertia=inertia,
        inertia_history=hist,
        contingency=dict(sorted(table.items(), key=lambda kv: (kv[0] == BENIGN, -sum(kv[1]), kv[0]))),
        cluster_rank=rank,
    )


# --- CSV emitters ----------------------------------------------------------

def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))


def matrix_csv(row_names, col_names, M) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + list(col_names))
    for name, row in zip(row_names, np.asarray(M)):
        w.writerow([name] + [_fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def contingency_csv(assign: ClusterAssignment) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["activity", "total"] + [f"cluster_{r + 1}" for r in range(assign.k)])
    for act, row in assign.contingency.items():
        w.writerow([act, sum(row)] + row)
    return buf.getvalue().encode("utf-8")
