import numpy as np
import pytest

from ethbias.dataset import LabeledDataset
from ethbias.metrics import (ConfusionReport, ExperimentError, activity_table_csv, aggregate, recall_table_csv,
                             run_experiment, score)


def counts(tp, fn, tn, fp):
    pred = [1] * tp + [0] * fn + [0] * tn + [1] * fp
    true = [1] * (tp + fn) + [0] * (tn + fp)
    return pred, true


def test_score_example():
    r = score(*counts(3, 1, 90, 10))
    assert (r.tp, r.fn, r.tn, r.fp) == (3, 1, 90, 10)
    assert r.recall_mal == pytest.approx(0.75)
    assert r.recall_ben == pytest.approx(0.9)
    assert r.balanced_accuracy == pytest.approx(0.825)


def test_score_perfect_and_empty_class():
    r = score([1, 0], [1, 0])
    assert r.balanced_accuracy == 1.0
    r = score([1, 0, 0], [1, 1, 1])
    assert r.recall_mal == pytest.approx(1 / 3) and r.recall_ben is None and r.balanced_accuracy is None


def test_length_mismatch():
    with pytest.raises(ValueError, match="length"):
        score([1, 0], [1])
    with pytest.raises(ValueError):
        score([1, 0], [1, 0], activities=["a"])


def test_per_activity():
    r = score([1, 0, 0, 0], [1, 1, 0, 0], ["Hack", "Hack", "benign", "benign"])
    assert r.per_activity == {"Hack": (2.0, 1.0), "benign": (2.0, 2.0)}


def test_aggregate_means_and_dispersion():
    a = score(*counts(1, 1, 2, 0))
    b = score(*counts(2, 0, 1, 1))
    m = aggregate([a, b])
    assert m.recall_mal == pytest.approx(0.75) and m.recall_ben == pytest.approx(0.75)
    assert m.dispersion["recall_mal"] == pytest.approx(0.25)
    assert m.repeats == 2
    assert aggregate([a]).recall_mal == a.recall_mal
    with pytest.raises(ValueError):
        aggregate([])


def test_report_json_round_trip():
    r = score([1, 0, 1], [1, 0, 0], ["x", "benign", "benign"])
    assert ConfusionReport.from_dict(r.to_dict()).to_json() == r.to_json()


def blob_dataset(n=40, seed=0):
    rng = np.random.default_rng(seed)
    y = np.array([i % 2 for i in range(n)])
    X = rng.normal(size=(n, 3)) + 4 * y[:, None]
    acts = tuple("Hack" if v else "benign" for v in y)
    return LabeledDataset(tuple(f"a{i:03d}" for i in range(n)), X, y, acts, ("synthetic",) * n)


def test_single_repeat_equals_score():
    from ethbias.models import default_params, fit_model, with_seed
    from ethbias.splits import make_split
    ds = blob_dataset()
    agg, reps = run_experiment(ds, "C0", "dt", repeats=1, base_seed=4, keep_reports=True)
    split = make_split(ds, "C0", None, 4)
    m = fit_model("dt", split.train, with_seed(default_params("dt"), 4))
    direct = score(m.predict_labels(split.test.X), split.test.y, split.test.activities)
    assert reps[0].to_json() == direct.to_json()
    assert agg.recall_mal == direct.recall_mal


def test_experiment_deterministic():
    ds = blob_dataset()
    a = run_experiment(ds, "C0", "rf", repeats=3)
    b = run_experiment(ds, "C0", "rf", repeats=3)
    assert a.to_json() == b.to_json()


def test_experiment_error_carries_repeat():
    ds = blob_dataset()
    with pytest.raises(ExperimentError) as err:
        run_experiment(ds, "C2", "dt", repeats=2, focus_activity="Nope")
    assert err.value.repeat == 0


def test_tables():
    r = score(*counts(3, 1, 90, 10))
    text = recall_table_csv([("rf", r)]).decode()
    assert text.splitlines() == ["model,recall_mal,recall_ben,balanced_accuracy,repeats", "rf,0.7500,0.9000,0.8250,1"]
    r2 = score([1, 0, 0], [1, 1, 0], ["Hack", "Scam", "benign"])
    lines = activity_table_csv([("C0", r2)]).decode().splitlines()
    assert lines[0] == "activity,C0_total,C0_correct"
    assert lines[-1].startswith("benign,")
    assert "Scam,1.0000,0.0000" in lines
