import csv
import json

import pytest

from conftest import FIXTURES
from ethbias.cli import load_config, main
from helpers import PIPELINE_CONFIG

SMALL = """\
seed: 3
synth:
  plan: {benign: 40, phishing: 12, hack: 12}
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text(SMALL)
    return p


def run(cfg, out, *args):
    return main([args[0], "-c", str(cfg), "--out-dir", str(out), *args[1:]])


def test_synth_features_train_nn(cfg_file, tmp_path):
    out = tmp_path / "run"
    assert run(cfg_file, out, "synth") == 0
    assert run(cfg_file, out, "features") == 0
    assert run(cfg_file, out, "train", "--config", "C0", "--model", "nn") == 0
    rep = json.loads((out / "reports" / "train_nn_C0.json").read_text())["report"]
    for key in ("tp", "fp", "tn", "fn", "recall_mal", "recall_ben", "balanced_accuracy", "per_activity"):
        assert key in rep
    assert (out / "models" / "nn_C0.json").exists()


def test_split_c2_keeps_focus_out_of_train(cfg_file, tmp_path):
    out = tmp_path / "run"
    run(cfg_file, out, "synth")
    run(cfg_file, out, "features")
    assert run(cfg_file, out, "split", "--config", "C2", "--focus", "phishing") == 0
    man = json.loads((out / "splits" / "C2_phishing.json").read_text())
    rows = list(csv.DictReader((out / "features.csv").open()))
    focus = {r["address"] for r in rows if r["activity"] == "phishing"}
    assert focus and not focus & set(man["train_addresses"])


def test_advgen_ineligible_activity(cfg_file, tmp_path, capsys):
    out = tmp_path / "run"
    run(cfg_file, out, "synth")
    run(cfg_file, out, "features")
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"phishing": 5, "gambling": 5}))
    code = run(cfg_file, out, "advgen", "--plan", str(plan))
    assert code != 0
    assert "'gambling'" in capsys.readouterr().err


def test_missing_input_names_producer(cfg_file, tmp_path, capsys):
    code = run(cfg_file, tmp_path / "empty", "features")
    assert code == 3
    err = capsys.readouterr().err
    assert "error[missing-input]" in err and "synth" in err
    code = run(cfg_file, tmp_path / "empty", "train", "--config", "C0", "--model", "dt")
    assert code == 3 and "features" in capsys.readouterr().err


def test_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("colour: blue\n")
    assert main(["synth", "-c", str(p)]) == 2
    assert "colour" in capsys.readouterr().err
    assert main(["synth", "-c", str(tmp_path / "nope.yaml")]) == 2


def test_overrides():
    cfg = load_config(None, {"seed": 9, "out_dir": "x", "epoch_seconds": 60})
    assert cfg["seed"] == 9 and cfg["out_dir"] == "x" and cfg["epoch"]["epoch_seconds"] == 60


def test_ingest_fixture_files(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(f"ingest:\n  transactions: [{FIXTURES / 'ledger_transactions.jsonl'}]\n"
                   f"  labels: {FIXTURES / 'ledger_labels.csv'}\n"
                   f"  snapshot_time: {json.loads((FIXTURES / 'ledger_meta.json').read_text())['snapshot_time']}\n")
    out = tmp_path / "run"
    assert run(cfg, out, "ingest") == 0
    assert run(cfg, out, "features") == 0
    assert len((out / "features.csv").read_text().splitlines()) == 26


def test_seed_changes_outputs(cfg_file, tmp_path):
    run(cfg_file, tmp_path / "a", "synth")
    main(["synth", "-c", str(cfg_file), "--out-dir", str(tmp_path / "b"), "--seed", "4"])
    a = (tmp_path / "a" / "ledger" / "transactions.jsonl").read_bytes()
    b = (tmp_path / "b" / "ledger" / "transactions.jsonl").read_bytes()
    assert a != b


def test_plan_replaces_default(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text(PIPELINE_CONFIG)
    cfg = load_config(p)
    assert cfg["synth"]["plan"] == {"benign": 60, "phishing": 20, "hack": 15, "gambling": 15}
    assert cfg["cluster"] == {"k": 3, "restarts": 3, "max_iter": 300}
