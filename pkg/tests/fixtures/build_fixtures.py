"""Regenerates the frozen fixture ledger and the oracle's expected feature values.

Run from the repo root: python3 tests/fixtures/build_fixtures.py
The outputs are committed; tests only read them.
"""
import json
import sys
from pathlib import Path

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE.parent))

from feature_oracle import oracle_features  # noqa: E402

from ethbias.synth import generate_ledger  # noqa: E402
from ethbias.txio import AccountLabel, Ledger, Transaction, write_ledger  # noqa: E402


def _addr(n):
    return "0x" + f"{n:040x}"


def _hash(n):
    return "0x" + f"{n:064x}"


def handcrafted(t0):
    a_single, a_zero, a_mixed = _addr(0xA1), _addr(0xA2), _addr(0xA3)
    other, other2 = _addr(0xB1), _addr(0xB2)
    E = 10**18
    txs = [
        # one incoming 5 ether transfer
        Transaction(_hash(1), 100, t0 + 100, other, a_single, 5 * E, 21000, 20 * 10**9, False),
        # zero-value only
        Transaction(_hash(2), 101, t0 + 200, a_zero, other, 0, 21000, 10**9, False),
        Transaction(_hash(3), 102, t0 + 5000, other2, a_zero, 0, 21000, 2 * 10**9, False),
        Transaction(_hash(4), 103, t0 + 9000, a_zero, other2, 0, 21000, 3 * 10**9, False),
        # self-transfer, failed tx, contract creation, same-second ordering
        Transaction(_hash(5), 104, t0 + 300, other, a_mixed, 2 * E, 21000, 5 * 10**9, False),
        Transaction(_hash(6), 105, t0 + 300, a_mixed, a_mixed, E // 2, 21000, 6 * 10**9, False),
        Transaction(_hash(7), 106, t0 + 4000, a_mixed, other2, E, 21000, 7 * 10**9, True),
        Transaction(_hash(8), 107, t0 + 7300, a_mixed, None, 0, 500000, 8 * 10**9, False),
        Transaction(_hash(9), 108, t0 + 20000, other2, a_mixed, 3 * E, 21000, 9 * 10**9, False),
        Transaction(_hash(10), 109, t0 + 20000, other, a_mixed, E, 21000, 9 * 10**9, False),
    ]
    labels = {
        a_single: AccountLabel(a_single, "benign", "benign", "synthetic"),
        a_zero: AccountLabel(a_zero, "malicious", "Scam", "synthetic"),
        a_mixed: AccountLabel(a_mixed, "malicious", "Phishing", "synthetic"),
    }
    return txs, labels


def main():
    ledger, labels = generate_ledger({"benign": 8, "phishing": 6, "hack": 4, "gambling": 4}, seed=2)
    txs, extra = handcrafted(ledger.transactions[0].timestamp)
    labels = {**labels, **extra}
    full = Ledger(ledger.transactions + tuple(txs), labels, ledger.snapshot_time)
    assert len(labels) == 25
    write_ledger(full, HERE / "ledger_transactions.jsonl", HERE / "ledger_labels.csv")
    (HERE / "ledger_meta.json").write_text(json.dumps({"snapshot_time": full.snapshot_time}) + "\n")

    adj = {}
    for t in full.transactions:
        if t.is_error or t.to_addr is None or t.to_addr == t.from_addr:
            continue
        adj.setdefault(t.from_addr, set()).add(t.to_addr)
        adj.setdefault(t.to_addr, set()).add(t.from_addr)
    expected = {}
    for a in sorted(labels):
        mine = [t for t in full.transactions if not t.is_error and a in (t.from_addr, t.to_addr)]
        expected[a] = oracle_features(a, mine, full.snapshot_time, adj)
    (HERE / "expected_features.json").write_text(json.dumps(expected, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
