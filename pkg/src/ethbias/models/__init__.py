"""Classifier suite: dt, rf, etc, adaboost, gboost, nn."""
from __future__ import annotations

import json

from ..dataset import LabeledDataset
from .base import (ETC_TUNED, FORMAT_VERSION, KINDS, BoostParams, MlpParams, TrainedModel, TreeParams,
                   default_params, params_from_dict, predict, with_seed)
from .ensemble import (AdaBoostModel, DecisionTreeModel, ForestModel, GradientBoostingModel, fit_adaboost,
                       fit_forest, fit_gboost, fit_tree)
from .mlp import MlpModel, fit_mlp

__all__ = [
    "KINDS", "TreeParams", "BoostParams", "MlpParams", "ETC_TUNED", "TrainedModel", "default_params",
    "params_from_dict", "with_seed", "predict", "fit_tree", "fit_forest", "fit_adaboost", "fit_gboost",
    "fit_mlp", "fit_model", "load_model", "save_model",
]


def fit_model(kind: str, train: LabeledDataset, params=None) -> TrainedModel:
    params = default_params(kind) if params is None else params
    if kind == "dt":
        return fit_tree(train, params)
    if kind == "rf":
        return fit_forest(train, params, "bagging_rf")
    if kind == "etc":
        return fit_forest(train, params, "extra")
    if kind == "adaboost":
        return fit_adaboost(train, params=params)
    if kind == "gboost":
        return fit_gboost(train, params=params)
    if kind == "nn":
        return fit_mlp(train, params)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")


def model_from_json(text: str) -> TrainedModel:
    doc = json.loads(text)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('format_version')}")
    kind = doc["kind"]
    params = params_from_dict(kind, doc["params"])
    args = (params, doc["feature_count"], doc["state"], doc["meta"])
    if kind == "dt":
        return DecisionTreeModel.from_state(*args)
    if kind in ("rf", "etc"):
        return ForestModel.from_state(*args, kind)
    if kind == "adaboost":
        return AdaBoostModel.from_state(*args)
    if kind == "gboost":
        return GradientBoostingModel.from_state(*args)
    if kind == "nn":
        return MlpModel.from_state(*args)
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model: TrainedModel, path) -> None:
    with open(path, "w") as f:
        f.write(model.to_json())


def load_model(path) -> TrainedModel:
    with open(path) as f:
        return model_from_json(f.read())
