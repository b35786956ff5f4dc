import json
import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
sys.path.insert(0, str(Path(__file__).parent))


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")
    config.addinivalue_line("markers", "criterion: acceptance test reported in the criteria summary")


@pytest.fixture(scope="session")
def fixture_ledger():
    from ethbias.txio import read_ledger
    snap = json.loads((FIXTURES / "ledger_meta.json").read_text())["snapshot_time"]
    return read_ledger(FIXTURES / "ledger_transactions.jsonl", FIXTURES / "ledger_labels.csv", snap)


@pytest.fixture(scope="session")
def synthetic_dataset():
    """170-account archetype dataset shared by model and metrics tests."""
    from ethbias.dataset import featurize_ledger
    from ethbias.synth import generate_ledger
    ledger, labels = generate_ledger({"benign": 100, "phishing": 30, "hack": 20, "gambling": 20}, seed=1)
    return featurize_ledger(ledger, labels)


# one PASS/FAIL line per acceptance criterion at the end of the run
_criteria: dict[int, tuple[str, str]] = {}
TITLES = {
    1: "feature oracle equivalence", 2: "burst / attractiveness examples", 3: "similarity properties",
    4: "k-means recovery and monotone inertia", 5: "split invariants", 6: "desk-scale bias analogue",
    7: "classifier sanity and determinism", 8: "MLP gradient check", 9: "GAN desk suite",
    10: "contamination raises recall", 11: "end-to-end reproducibility",
}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = dict(report.keywords).get("criterion")
    if marker is None or "::test_criterion_" not in report.nodeid:
        return
    num = int(report.nodeid.split("::test_criterion_")[1][:2])
    title = TITLES.get(num, report.nodeid)
    status = "PASS" if report.passed else "FAIL"
    prev = _criteria.get(num)
    if prev is None:
        _criteria[num] = (title, status)
    elif status == "FAIL":
        _criteria[num] = (prev[0], status)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, status = _criteria[num]
        terminalreporter.write_line(f"criterion {num:2d} {status}  {title}")
