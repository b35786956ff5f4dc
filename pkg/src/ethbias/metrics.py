"""Recall, balanced accuracy and per-activity confusion breakdown.

Malicious is the positive class throughout.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import BENIGN, LabeledDataset
from .models import default_params, fit_model, with_seed
from .splits import make_split


@dataclass
class ConfusionReport:
    tp: float
    fp: float
    tn: float
    fn: float
    recall_mal: float | None
    recall_ben: float | None
    balanced_accuracy: float | None
    per_activity: dict[str, tuple[float, float]] = field(default_factory=dict)
    repeats: int = 1
    dispersion: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "recall_mal": self.recall_mal, "recall_ben": self.recall_ben,
            "balanced_accuracy": self.balanced_accuracy,
            "per_activity": {k: [v[0], v[1]] for k, v in self.per_activity.items()},
            "repeats": self.repeats,
            "dispersion": self.dispersion,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d) -> "ConfusionReport":
        return cls(d["tp"], d["fp"], d["tn"], d["fn"], d["recall_mal"], d["recall_ben"], d["balanced_accuracy"],
                   {k: (v[0], v[1]) for k, v in d["per_activity"].items()}, d["repeats"], d["dispersion"])


def score(predictions, truth, activities=None) -> ConfusionReport:
    """predictions/truth: 1 = malicious, 0 = benign. An empty class leaves its recall as None."""
    pred = np.asarray(predictions, dtype=int)
    true = np.asarray(truth, dtype=int)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(true)} labels")
    tp = int(np.sum((pred == 1) & (true == 1)))
    fn = int(np.sum((pred == 0) & (true == 1)))
    tn = int(np.sum((pred == 0) & (true == 0)))
    fp = int(np.sum((pred == 1) & (true == 0)))
    rm = tp / (tp + fn) if tp + fn else None
    rb = tn / (tn + fp) if tn + fp else None
    bal = (rm + rb) / 2 if rm is not None and rb is not None else None
    per: dict[str, tuple[float, float]] = {}
    if activities is not None:
        if len(activities) != len(true):
            raise ValueError("activities length mismatch")
        for act in sorted(set(activities)):
            m = np.array([a == act for a in activities])
            per[act] = (float(m.sum()), float(np.sum(pred[m] == true[m])))
    return ConfusionReport(tp, fp, tn, fn, rm, rb, bal, per)


def score_model(model, test: LabeledDataset) -> ConfusionReport:
    return score(model.predict_labels(test.X), test.y, test.activities)


def _mean(vals):
    # fixed index order keeps float summation deterministic
    total = 0.0
    for v in vals:
        total += v
    return total / len(vals)


def aggregate(reports: list[ConfusionReport]) -> ConfusionReport:
    """Average counts and metrics over repeats; recalls absent in some repeat average over the rest."""
    if not reports:
        raise ValueError("no reports to aggregate")
    out = {}
    disp = {}
    for key in ("tp", "fp", "tn", "fn", "recall_mal", "recall_ben", "balanced_accuracy"):
        vals = [getattr(r, key) for r in reports if getattr(r, key) is not None]
        if vals:
            mu = _mean(vals)
            out[key] = mu
            disp[key] = math.sqrt(_mean([(v - mu) ** 2 for v in vals]))
        else:
            out[key] = None
    acts = sorted({a for r in reports for a in r.per_activity})
    per = {}
    for a in acts:
        tot = _mean([r.per_activity.get(a, (0.0, 0.0))[0] for r in reports])
        cor = _mean([r.per_activity.get(a, (0.0, 0.0))[1] for r in reports])
        per[a] = (round(tot, 2), round(cor, 2))
    return ConfusionReport(out["tp"], out["fp"], out["tn"], out["fn"], out["recall_mal"], out["recall_ben"],
                           out["balanced_accuracy"], per, len(reports), disp)


class ExperimentError(RuntimeError):
    def __init__(self, repeat: int, cause: Exception):
        self.repeat = repeat
        super().__init__(f"repeat {repeat} failed: {cause}")


def run_experiment(dataset: LabeledDataset, config: str, kind: str, params=None, repeats: int = 50,
                   base_seed: int = 0, focus_activity: str | None = None, keep_reports: bool = False):
    """Repeat split + fit + score with seed = base_seed + i and average the reports."""
    params = default_params(kind) if params is None else params
    reports = []
    for i in range(repeats):
        seed = base_seed + i
        try:
            split = make_split(dataset, config, focus_activity, seed)
            model = fit_model(kind, split.train, with_seed(params, seed))
            reports.append(score_model(model, split.test))
        except Exception as e:  # noqa: BLE001 - reported with the repeat index
            raise ExperimentError(i, e) from e
    agg = aggregate(reports)
    return (agg, reports) if keep_reports else agg


# --- table emitters --------------------------------------------------------

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def recall_table_csv(rows: list[tuple[str, ConfusionReport]]) -> bytes:
    """Rows of (label, report) as label, recall_mal, recall_ben, balanced_accuracy."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "recall_mal", "recall_ben", "balanced_accuracy", "repeats"])
    for label, r in rows:
        w.writerow([label, _cell(r.recall_mal), _cell(r.recall_ben), _cell(r.balanced_accuracy), r.repeats])
    return buf.getvalue().encode("utf-8")


def activity_table_csv(columns: list[tuple[str, ConfusionReport]]) -> bytes:
    """Per-activity (total, correct) laid out with one column pair per configuration."""
    acts = sorted({a for _, r in columns for a in r.per_activity}, key=lambda a: (a == BENIGN, a))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["activity"]
    for label, _ in columns:
        head += [f"{label}_total", f"{label}_correct"]
    w.writerow(head)
    for a in acts:
        row = [a]
        for _, r in columns:
            tot, cor = r.per_activity.get(a, (None, None))
            row += [_cell(tot), _cell(cor)]
        w.writerow(row)
    return buf.getvalue().encode("utf-8")
