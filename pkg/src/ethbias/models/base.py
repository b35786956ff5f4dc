"""Model parameters, the fitted-model base class and JSON persistence."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..dataset import BENIGN, MALICIOUS, LabeledDataset

FORMAT_VERSION = 1
KINDS = ("dt", "rf", "etc", "adaboost", "gboost", "nn")


@dataclass(frozen=True)
class TreeParams:
    criterion: str = "gini"
    max_features: float = 1.0
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    n_estimators: int = 100
    max_samples: float = 1.0
    class_weight: str = "none"
    bootstrap: bool = True
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.criterion not in ("gini", "entropy"):
            raise ValueError(f"criterion must be gini or entropy, got {self.criterion!r}")
        for name in ("max_features", "max_samples"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if self.class_weight not in ("none", "balanced"):
            raise ValueError(f"class_weight must be none or balanced, got {self.class_weight!r}")
        if self.min_samples_leaf < 1 or self.min_samples_split < 2:
            raise ValueError("min_samples_leaf >= 1 and min_samples_split >= 2 required")

    @property
    def split_leaf_mismatch(self) -> bool:
        """True when min_samples_split < 2 * min_samples_leaf (allowed, but some splits can never happen)."""
        return self.min_samples_split < 2 * self.min_samples_leaf


# tuned extra-trees setting used for the bias analysis
ETC_TUNED = TreeParams(criterion="entropy", max_features=0.3, min_samples_leaf=14, min_samples_split=20,
                       n_estimators=200, max_samples=0.3, class_weight="balanced", bootstrap=False)


@dataclass(frozen=True)
class BoostParams:
    rounds: int = 100
    learning_rate: float = 0.1
    depth: int = 3
    seed: int = 0


@dataclass(frozen=True)
class MlpParams:
    hidden_layers: tuple[int, ...] = (64, 64)
    epochs: int = 50
    l2: float = 1e-4
    dropout: float = 0.5
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def default_params(kind: str):
    if kind in ("dt", "rf"):
        return TreeParams(max_features=1.0 if kind == "dt" else 0.3)
    if kind == "etc":
        return ETC_TUNED
    if kind == "adaboost":
        return BoostParams(rounds=50, depth=1)
    if kind == "gboost":
        return BoostParams()
    if kind == "nn":
        return MlpParams()
    raise ValueError(f"unknown model kind {kind!r}")


def params_from_dict(kind: str, d: dict | None):
    base = default_params(kind)
    if not d:
        return base
    return type(base)(**{**asdict(base), **d})


def with_seed(params, seed: int):
    return type(params)(**{**asdict(params), "seed": int(seed)})


def check_train(train: LabeledDataset):
    if len(set(train.y.tolist())) < 2:
        raise ValueError("training data must contain both classes")


class TrainedModel:
    """Fitted binary classifier; subclasses implement ``decision_score``."""

    kind = ""

    def __init__(self, params, feature_count: int, meta: dict | None = None):
        self.params = params
        self.feature_count = feature_count
        self.meta = meta or {}

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.feature_count:
            raise ValueError(f"expected {self.feature_count} features, got {X.shape[1]}")
        return X

    def malicious_score(self, X) -> np.ndarray:
        return self.decision_score(self._check_X(X))

    def decision_score(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict_labels(self, X) -> np.ndarray:
        # score exactly 0.5 -> benign
        return (self.malicious_score(X) > 0.5).astype(int)

    # persistence
    def state(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "params": asdict(self.params),
            "feature_count": self.feature_count,
            "meta": self.meta,
            "state": self.state(),
        }
        return json.dumps(doc, sort_keys=True) + "\n"


def predict(model: TrainedModel, vectors) -> list[tuple[str, float]]:
    scores = model.malicious_score(vectors)
    return [(MALICIOUS if s > 0.5 else BENIGN, float(s)) for s in scores]
