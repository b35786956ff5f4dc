"""Tiny builders for hand-written transactions."""
from ethbias.txio import Ledger, Transaction

E = 10**18


def addr(n: int) -> str:
    return "0x" + f"{n:040x}"


def tx(n, ts, frm, to, value=0, gas_price=10**9, err=False, gas=21000):
    return Transaction("0x" + f"{n:064x}", 1000 + n, ts, frm, to, value, gas, gas_price, err)


def ledger(*txs, snapshot=None):
    return Ledger(tuple(txs), {}, snapshot)


PIPELINE_CONFIG = """\
seed: 11
synth:
  plan: {benign: 60, phishing: 20, hack: 15, gambling: 15}
split: {config: C2, focus: phishing}
models:
  rf: {n_estimators: 20}
  etc: {n_estimators: 20}
evaluate: {configs: [C0, C2], models: [dt, nn], repeats: 2}
cluster: {k: 3, restarts: 3}
advgen:
  plan: {phishing: 40, gambling: 40}
  gan: {epochs: 300, hidden_widths: [32, 32]}
contaminate: {mode: fraction_5, models: [dt, nn], exclude_from_train: [phishing, gambling]}
"""

PIPELINE_STEPS = (["synth"], ["features"], ["similarity"], ["cluster"], ["split"],
                  ["train", "--config", "C0", "--model", "nn"], ["train", "--config", "C0", "--model", "rf"],
                  ["evaluate"], ["advgen"], ["contaminate"], ["report"])


def run_pipeline(out_dir, config_path):
    """Run every pipeline step into ``out_dir``; returns {relative path: bytes}."""
    import pathlib

    from ethbias.cli import main
    for step in PIPELINE_STEPS:
        code = main([step[0], "-c", str(config_path), "--out-dir", str(out_dir), *step[1:]])
        assert code == 0, step
    root = pathlib.Path(out_dir)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
