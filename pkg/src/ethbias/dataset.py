"""Labeled feature matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import N_FEATURES, NeighborIndex, extract_features, read_feature_csv, write_feature_csv
from .series import EpochConfig, build_profile

BENIGN = "benign"
MALICIOUS = "malicious"


@dataclass(frozen=True)
class LabeledDataset:
    """Rows of (address, feature vector, class, activity, source).

    ``y`` is 1 for malicious, 0 for benign.
    """

    addresses: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    activities: tuple[str, ...]
    sources: tuple[str, ...]

    def __post_init__(self):
        n = len(self.addresses)
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] != n:
            raise ValueError(f"X must be {n} x d, got shape {X.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", np.asarray(self.y, dtype=int).reshape(n))
        if not (len(self.activities) == len(self.sources) == n):
            raise ValueError("column lengths differ")
        if len(set(self.addresses)) != n:
            raise ValueError("addresses must be unique")

    @classmethod
    def build(cls, rows) -> "LabeledDataset":
        """rows: iterable of (address, values, klass, activity, source)."""
        rows = list(rows)
        if not rows:
            return cls.empty()
        addr, vals, klass, act, src = zip(*rows)
        y = [1 if k == MALICIOUS else 0 for k in klass]
        return cls(tuple(addr), np.vstack([np.asarray(v, dtype=float) for v in vals]), np.array(y), tuple(act), tuple(src))

    @classmethod
    def empty(cls, dim: int = N_FEATURES) -> "LabeledDataset":
        return cls((), np.zeros((0, dim)), np.zeros(0, dtype=int), (), ())

    def __len__(self) -> int:
        return len(self.addresses)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def klasses(self) -> tuple[str, ...]:
        return tuple(MALICIOUS if v else BENIGN for v in self.y)

    def rows(self):
        for i, a in enumerate(self.addresses):
            yield a, self.X[i], MALICIOUS if self.y[i] else BENIGN, self.activities[i], self.sources[i]

    def take(self, idx) -> "LabeledDataset":
        idx = [int(i) for i in idx]
        return LabeledDataset(
            tuple(self.addresses[i] for i in idx),
            self.X[idx] if idx else np.zeros((0, self.dim)),
            self.y[idx] if idx else np.zeros(0, dtype=int),
            tuple(self.activities[i] for i in idx),
            tuple(self.sources[i] for i in idx),
        )

    def select(self, addresses) -> "LabeledDataset":
        pos = {a: i for i, a in enumerate(self.addresses)}
        return self.take(pos[a] for a in addresses)

    def where(self, mask) -> "LabeledDataset":
        return self.take(np.flatnonzero(np.asarray(mask, dtype=bool)))

    def concat(self, other: "LabeledDataset") -> "LabeledDataset":
        if len(other) == 0:
            return self
        if len(self) == 0:
            return other
        return LabeledDataset(
            self.addresses + other.addresses,
            np.vstack([self.X, other.X]),
            np.concatenate([self.y, other.y]),
            self.activities + other.activities,
            self.sources + other.sources,
        )

    def activity_mask(self, activity: str) -> np.ndarray:
        return np.array([a == activity for a in self.activities], dtype=bool)

    def activity_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for a in self.activities:
            out[a] = out.get(a, 0) + 1
        return dict(sorted(out.items()))

    def malicious(self) -> "LabeledDataset":
        return self.where(self.y == 1)

    def benign(self) -> "LabeledDataset":
        return self.where(self.y == 0)

    def to_csv(self) -> bytes:
        return write_feature_csv(((a, v), k, act, s) for a, v, k, act, s in self.rows())

    @classmethod
    def from_csv(cls, stream) -> "LabeledDataset":
        return cls.build(read_feature_csv(stream))

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_csv())

    @classmethod
    def load(cls, path) -> "LabeledDataset":
        with open(path, "rb") as f:
            return cls.from_csv(f)


def featurize_ledger(ledger, labels=None, cfg: EpochConfig = EpochConfig()) -> LabeledDataset:
    """Feature rows for every labeled account, in sorted address order."""
    labels = ledger.labels if labels is None else labels
    graph = NeighborIndex.from_ledger(ledger, cfg.include_failed)
    rows = []
    for addr in sorted(labels):
        lab = labels[addr]
        vec = extract_features(build_profile(ledger, addr, cfg), graph, cfg, ledger.snapshot_time)
        rows.append((addr, vec.values, lab.klass, lab.activity, lab.source))
    return LabeledDataset.build(rows)
