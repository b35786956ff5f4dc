"""Train/test sub-datasets C0-C5 around a focus activity, and the new-data protocol.

C0  uniform 80/20 account split
C1  train C0, test C0 minus focus accounts
C2  train C0 minus every focus account, test C0
C3  train as C2, test as C1
C4  train C0 plus the focus accounts of the C0 test side, test as C1
C5  80/20 within every activity (and within benign), train side rounded up
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataset import LabeledDataset

CONFIGS = ("C0", "C1", "C2", "C3", "C4", "C5")
MIN_ROWS = 5


@dataclass(frozen=True)
class SplitPair:
    config: str
    focus_activity: str | None
    train: LabeledDataset
    test: LabeledDataset
    seed: int

    def __post_init__(self):
        overlap = set(self.train.addresses) & set(self.test.addresses)
        if overlap:
            raise AssertionError(f"{len(overlap)} addresses on both sides of split {self.config}")

    def manifest(self) -> dict:
        return {
            "config": self.config,
            "focus_activity": self.focus_activity,
            "seed": self.seed,
            "train_addresses": list(self.train.addresses),
            "test_addresses": list(self.test.addresses),
        }

    def to_json(self) -> str:
        return json.dumps(self.manifest(), indent=1) + "\n"

    @classmethod
    def from_manifest(cls, manifest: dict, dataset: LabeledDataset) -> "SplitPair":
        return cls(
            manifest["config"], manifest.get("focus_activity"),
            dataset.select(manifest["train_addresses"]),
            dataset.select(manifest["test_addresses"]),
            int(manifest["seed"]),
        )


def _n_train_round(n: int) -> int:
    # round(0.8 * n), half up, in integers
    return (8 * n + 5) // 10


def _n_train_ceil(n: int) -> int:
    return (4 * n + 4) // 5


def _check(dataset: LabeledDataset):
    if len(dataset) < MIN_ROWS:
        raise ValueError(f"dataset has {len(dataset)} rows; need at least {MIN_ROWS}")
    if len(set(dataset.y.tolist())) < 2:
        raise ValueError("dataset must contain both classes")


def make_c0(dataset: LabeledDataset, seed: int) -> SplitPair:
    _check(dataset)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(dataset))
    k = _n_train_round(len(dataset))
    return SplitPair("C0", None, dataset.take(np.sort(perm[:k])), dataset.take(np.sort(perm[k:])), seed)


def derive_config(base: SplitPair, config: str, focus_activity: str) -> SplitPair:
    if base.config != "C0":
        raise ValueError(f"base split must be C0, got {base.config}")
    if config not in CONFIGS or config == "C5":
        raise ValueError(f"unknown derived config {config!r} (expected C0-C4)")
    tr, ts = base.train, base.test
    if focus_activity not in tr.activities and focus_activity not in ts.activities:
        raise ValueError(f"focus activity {focus_activity!r} not present")
    tr_focus = tr.activity_mask(focus_activity)
    ts_focus = ts.activity_mask(focus_activity)
    if config == "C0":
        train, test = tr, ts
    elif config == "C1":
        train, test = tr, ts.where(~ts_focus)
    elif config == "C2":
        train, test = tr.where(~tr_focus), ts
    elif config == "C3":
        train, test = tr.where(~tr_focus), ts.where(~ts_focus)
    else:  # C4
        train, test = tr.concat(ts.where(ts_focus)), ts.where(~ts_focus)
    return SplitPair(config, focus_activity, train, test, base.seed)


def make_c5(dataset: LabeledDataset, seed: int) -> SplitPair:
    _check(dataset)
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for act in sorted(set(dataset.activities)):
        idx = np.flatnonzero(dataset.activity_mask(act))
        idx = idx[rng.permutation(len(idx))]
        k = _n_train_ceil(len(idx))
        train_idx.extend(idx[:k].tolist())
        test_idx.extend(idx[k:].tolist())
    return SplitPair("C5", None, dataset.take(sorted(train_idx)), dataset.take(sorted(test_idx)), seed)


def make_split(dataset: LabeledDataset, config: str, focus_activity: str | None, seed: int) -> SplitPair:
    if config == "C5":
        return make_c5(dataset, seed)
    base = make_c0(dataset, seed)
    if config == "C0":
        return base
    if focus_activity is None:
        raise ValueError(f"{config} needs a focus activity")
    return derive_config(base, config, focus_activity)


def make_newdata_eval(train_source: LabeledDataset, new_malicious: LabeledDataset, base: SplitPair) -> SplitPair:
    """Evaluate on newly observed malicious accounts.

    Accounts of ``new_malicious`` that also occur in ``train_source`` are
    removed from the base train side; the test side holds the benign part of
    the base test side plus every new malicious account (an overlapping
    account is represented by its newer row).
    """
    if len(new_malicious) == 0:
        raise ValueError("new-data set is empty")
    new_addrs = set(new_malicious.addresses)
    overlap = new_addrs & set(train_source.addresses)
    train = base.train.where([a not in overlap for a in base.train.addresses])
    benign_test = base.test.where((base.test.y == 0) & np.array([a not in new_addrs for a in base.test.addresses]))
    return SplitPair("Db", None, train, benign_test.concat(new_malicious), base.seed)
