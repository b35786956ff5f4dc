"""Command-line pipeline: synth/ingest -> features -> similarity, cluster, splits, models, adversarial runs -> report.

Every subcommand reads the same config document (YAML or JSON, see README)
and works inside one output directory::

    ledger/transactions.jsonl  ledger/labels.csv  ledger/meta.json   (synth, ingest)
    features.csv                                                    (features)
    similarity/*.csv                                                (similarity)
    cluster/*.csv                                                   (cluster)
    splits/<config>.json                                            (split)
    models/<model>_<config>.json   reports/train_<model>_<config>.json   (train)
    reports/evaluate_<model>_<config>.json                          (evaluate)
    dg/features_dg.csv  dg/generators/<activity>.json               (advgen)
    reports/contaminate_<mode>.json                                 (contaminate)
    report/*.csv                                                    (report)

All randomness comes from the root ``seed``; each subcommand derives its
own child seed from a fixed label so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import copy
import glob
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import yaml

from . import __version__
from .advgen import GanConfig, IneligibleActivityError, InsufficientDataError, contaminate_training, derive_seed, make_dg
from .dataset import LabeledDataset, featurize_ledger
from .metrics import (ConfusionReport, ExperimentError, activity_table_csv, recall_table_csv, run_experiment,
                      score_model)
from .models import KINDS, fit_model, params_from_dict, save_model, with_seed
from .series import EpochConfig
from .similarity import cluster_accounts, contingency_csv, matrix_csv, pairwise_activity_similarity
from .splits import CONFIGS, SplitPair, make_split
from .synth import generate_ledger
from .txio import FetchError, Ledger, ParseError, fetch_many, load_labels, merge_transactions, read_ledger, write_ledger

log = logging.getLogger("ethbias")

DEFAULT_CONFIG = {
    "seed": 0,
    "out_dir": "run",
    "epoch": {"epoch_seconds": 3600, "burst_sigma": 2.0, "include_failed": False},
    "synth": {"plan": {"benign": 100, "phishing": 30, "hack": 20, "gambling": 20}, "archetypes": None},
    "ingest": {"transactions": [], "labels": None, "format": None, "snapshot_time": None, "fetch": None},
    "similarity": {"activities": None, "standardize": True, "malicious_only": True},
    "cluster": {"k": 4, "restarts": 10, "max_iter": 300},
    "split": {"config": "C0", "focus": None},
    "models": {},
    "evaluate": {"configs": ["C0"], "models": list(KINDS), "repeats": 10},
    "advgen": {"plan": {}, "gan": {}},
    "contaminate": {"mode": "fraction_5", "models": list(KINDS), "exclude_from_train": []},
}

# exit codes per error category
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_DATA = 4
EXIT_RUNTIME = 5


class CliError(Exception):
    def __init__(self, category: str, msg: str, code: int):
        self.category = category
        self.code = code
        super().__init__(msg)


# mappings that a config document replaces wholesale instead of merging into
REPLACED_KEYS = {"plan", "gan", "fetch", "archetypes"}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and out[k] and k not in REPLACED_KEYS:
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None, overrides=None) -> dict:
    doc = {}
    if path is not None:
        try:
            with open(path) as f:
                doc = yaml.safe_load(f) or {}
        except FileNotFoundError:
            raise CliError("config", f"config file {path} not found", EXIT_CONFIG) from None
        except yaml.YAMLError as e:
            raise CliError("config", f"config file {path} is not valid YAML/JSON: {e}", EXIT_CONFIG) from None
        if not isinstance(doc, dict):
            raise CliError("config", f"config file {path} must hold a mapping", EXIT_CONFIG)
    unknown = set(doc) - set(DEFAULT_CONFIG)
    if unknown:
        raise CliError("config", f"unknown config sections: {sorted(unknown)}", EXIT_CONFIG)
    cfg = _merge(DEFAULT_CONFIG, doc)
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k == "epoch_seconds":
            cfg["epoch"]["epoch_seconds"] = int(v)
        else:
            cfg[k] = v
    return cfg


class Run:
    """Paths and shared loaders for one output directory."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.out = Path(cfg["out_dir"])
        self.seed = int(cfg["seed"])

    def child_seed(self, label: str) -> int:
        return derive_seed(self.seed, label)

    def path(self, *parts) -> Path:
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def require(self, rel: str, producer: str) -> Path:
        p = self.out / rel
        if not p.exists():
            raise CliError("missing-input", f"{p} not found; run `ethbias {producer}` first", EXIT_MISSING)
        return p

    def epoch_cfg(self) -> EpochConfig:
        e = self.cfg["epoch"]
        return EpochConfig(int(e["epoch_seconds"]), float(e["burst_sigma"]), bool(e["include_failed"]))

    def write_bytes(self, rel, data: bytes):
        p = self.path(*Path(rel).parts)
        p.write_bytes(data)
        log.info("wrote %s", p)

    def write_json(self, rel, obj):
        self.write_bytes(rel, (json.dumps(obj, indent=1, sort_keys=True) + "\n").encode("utf-8"))

    def ledger(self) -> Ledger:
        tx = self.require("ledger/transactions.jsonl", "synth` or `ethbias ingest")
        meta = json.loads(self.require("ledger/meta.json", "synth` or `ethbias ingest").read_text())
        labels = self.out / "ledger" / "labels.csv"
        return read_ledger(tx, labels if labels.exists() else None, meta.get("snapshot_time"), "jsonl")

    def features(self) -> LabeledDataset:
        return LabeledDataset.load(self.require("features.csv", "features"))

    def dg(self) -> LabeledDataset:
        return LabeledDataset.load(self.require("dg/features_dg.csv", "advgen"))

    def model_params(self, kind: str):
        try:
            return params_from_dict(kind, self.cfg["models"].get(kind))
        except TypeError as e:
            raise CliError("config", f"bad parameters for model {kind}: {e}", EXIT_CONFIG) from None

    def split(self, config: str, focus) -> SplitPair:
        # one base seed for every config so C1-C4 derive from the same C0 partition
        return make_split(self.features(), config, focus, self.child_seed("split"))


def _write_ledger(run: Run, ledger: Ledger):
    write_ledger(ledger, run.path("ledger", "transactions.jsonl"), run.path("ledger", "labels.csv"))
    run.write_json("ledger/meta.json", {"snapshot_time": ledger.snapshot_time,
                                        "n_transactions": len(ledger.transactions),
                                        "n_labels": len(ledger.labels)})


# --- subcommands -----------------------------------------------------------

def cmd_synth(run: Run, args):
    sc = run.cfg["synth"]
    arche = None
    if sc.get("archetypes"):
        with open(sc["archetypes"]) as f:
            arche = json.load(f)
    ledger, _ = generate_ledger(sc["plan"], run.child_seed("synth"), arche)
    _write_ledger(run, ledger)


def cmd_ingest(run: Run, args):
    ic = run.cfg["ingest"]
    if args.transactions:
        ic["transactions"] = args.transactions
    if args.labels:
        ic["labels"] = args.labels
    paths = ic["transactions"]
    paths = [paths] if isinstance(paths, str) else list(paths or [])
    labels = {}
    if ic.get("labels"):
        with open(ic["labels"], "rb") as f:
            labels = load_labels(f)
    groups = []
    for p in paths:
        groups.append(read_ledger(p, fmt=ic.get("format")).transactions)
    if ic.get("fetch"):
        fc = ic["fetch"]
        key_env = fc.get("api_key_env", "ETHERSCAN_API_KEY")
        key = os.environ.get(key_env)
        if not key:
            raise CliError("config", f"environment variable {key_env} holds no API key", EXIT_CONFIG)
        addrs = fc.get("addresses") or sorted(labels)
        fetched = fetch_many(fc["endpoint"], key, addrs, int(fc.get("page_size", 1000)))
        groups.extend(fetched.values())
    if not groups:
        raise CliError("config", "ingest needs transaction files or a fetch section", EXIT_CONFIG)
    txs = merge_transactions(groups)
    _write_ledger(run, Ledger(tuple(txs), labels, ic.get("snapshot_time")))


def cmd_features(run: Run, args):
    ledger = run.ledger()
    if not ledger.labels:
        raise CliError("missing-input", "ledger has no labels; provide a labels file to `ethbias ingest`", EXIT_MISSING)
    ds = featurize_ledger(ledger, cfg=run.epoch_cfg())
    run.write_bytes("features.csv", ds.to_csv())


def cmd_similarity(run: Run, args):
    sc = run.cfg["similarity"]
    sim = pairwise_activity_similarity(run.features(), sc.get("activities"), bool(sc["standardize"]),
                                       bool(sc["malicious_only"]))
    acts = list(sim.activities)
    run.write_bytes("similarity/activity_p_geq0.csv", matrix_csv(acts, acts, sim.p_geq0))
    run.write_bytes("similarity/activity_p_lt0.csv", matrix_csv(acts, acts, sim.p_lt0))
    run.write_bytes("similarity/activity_pairs.csv", matrix_csv(acts, acts, sim.n_pairs.astype(float)))


def cmd_cluster(run: Run, args):
    cc = run.cfg["cluster"]
    k = int(args.k or cc["k"])
    assign = cluster_accounts(run.features(), k, run.child_seed("cluster"), int(cc["max_iter"]), int(cc["restarts"]))
    run.write_bytes(f"cluster/contingency_k{k}.csv", contingency_csv(assign))
    lines = ["address,cluster_rank\n"]
    rank = {c: r + 1 for r, c in enumerate(assign.cluster_rank)}
    for a in sorted(assign.labels):
        lines.append(f"{a},{rank[assign.labels[a]]}\n")
    run.write_bytes(f"cluster/assignments_k{k}.csv", "".join(lines).encode())
    run.write_json(f"cluster/inertia_k{k}.json", {"inertia": assign.inertia, "history": assign.inertia_history})


def _split_args(run: Run, args):
    config = args.config or run.cfg["split"]["config"]
    focus = args.focus or run.cfg["split"].get("focus")
    if config not in CONFIGS:
        raise CliError("config", f"unknown split config {config!r}; expected one of {CONFIGS}", EXIT_CONFIG)
    if config in ("C0", "C5"):
        focus = None
    return config, focus


def _tag(config, focus):
    return config if focus is None else f"{config}_{focus}"


def cmd_split(run: Run, args):
    config, focus = _split_args(run, args)
    sp = run.split(config, focus)
    run.write_bytes(f"splits/{_tag(config, focus)}.json", sp.to_json().encode())


def cmd_train(run: Run, args):
    config, focus = _split_args(run, args)
    kind = args.model
    sp = run.split(config, focus)
    model = fit_model(kind, sp.train, with_seed(run.model_params(kind), run.child_seed(f"train:{kind}")))
    tag = _tag(config, focus)
    save_model(model, run.path("models", f"{kind}_{tag}.json"))
    rep = score_model(model, sp.test)
    run.write_json(f"reports/train_{kind}_{tag}.json",
                   {"model": kind, "config": config, "focus": focus, "report": rep.to_dict()})


def cmd_evaluate(run: Run, args):
    ec = run.cfg["evaluate"]
    configs = args.configs or ec["configs"]
    kinds = args.models or ec["models"]
    repeats = int(args.repeats or ec["repeats"])
    focus = args.focus or run.cfg["split"].get("focus")
    ds = run.features()
    for config in configs:
        f = None if config in ("C0", "C5") else focus
        for kind in kinds:
            rep = run_experiment(ds, config, kind, run.model_params(kind), repeats,
                                 run.child_seed(f"evaluate:{kind}"), f)
            run.write_json(f"reports/evaluate_{kind}_{_tag(config, f)}.json",
                           {"model": kind, "config": config, "focus": f, "report": rep.to_dict()})


def cmd_advgen(run: Run, args):
    ac = run.cfg["advgen"]
    plan = ac["plan"]
    if args.plan:
        try:
            with open(args.plan) as f:
                plan = yaml.safe_load(f)
        except FileNotFoundError:
            raise CliError("config", f"plan file {args.plan} not found", EXIT_CONFIG) from None
    if not plan:
        raise CliError("config", "advgen needs a plan {activity: count}", EXIT_CONFIG)
    gan = GanConfig(**{**ac.get("gan", {}), "seed": run.child_seed("advgen")})
    gens = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dg = make_dg(run.features(), {str(k): int(v) for k, v in plan.items()}, gan, gens)
    run.write_bytes("dg/features_dg.csv", dg.to_csv())
    for act, g in sorted(gens.items()):
        run.write_bytes(f"dg/generators/{act}.json", g.to_json().encode())


def cmd_contaminate(run: Run, args):
    cc = run.cfg["contaminate"]
    mode = args.mode or cc["mode"]
    kinds = args.models or cc["models"]
    exclude = set(cc.get("exclude_from_train") or [])
    dg = run.dg()
    sp = run.split("C0", None)
    train = sp.train.where([a not in exclude for a in sp.train.activities])
    seed = run.child_seed(f"contaminate:{mode}")
    train_c, rest = contaminate_training(train, dg, mode, seed)
    out = {"mode": mode, "excluded_activities": sorted(exclude), "n_injected": len(train_c) - len(train),
           "n_adversarial_test": len(rest), "models": {}}
    for kind in kinds:
        params = with_seed(run.model_params(kind), run.child_seed(f"train:{kind}"))
        base = fit_model(kind, train, params)
        cont = fit_model(kind, train_c, params)
        out["models"][kind] = {
            "baseline": score_model(base, rest).to_dict(),
            "contaminated": score_model(cont, rest).to_dict(),
            "contaminated_on_original_test": score_model(cont, sp.test).to_dict(),
        }
    run.write_json(f"reports/contaminate_{mode}.json", out)


def _load_reports(run: Run, prefix: str):
    docs = []
    for p in sorted(glob.glob(str(run.out / "reports" / f"{prefix}_*.json"))):
        with open(p) as f:
            docs.append(json.load(f))
    return docs


def cmd_report(run: Run, args):
    ev = _load_reports(run, "evaluate") + [{**d, "config": "single-" + d["config"]} for d in _load_reports(run, "train")]
    co = _load_reports(run, "contaminate")
    if not ev and not co:
        raise CliError("missing-input", f"no reports under {run.out / 'reports'}; run `ethbias train`, "
                       "`ethbias evaluate` or `ethbias contaminate` first", EXIT_MISSING)
    if ev:
        rows = [(f"{d['model']}/{_tag(d['config'], d['focus'])}", ConfusionReport.from_dict(d["report"])) for d in ev]
        run.write_bytes("report/recall_table.csv", recall_table_csv(rows))
        by_model: dict[str, list] = {}
        for label, rep in rows:
            by_model.setdefault(label.split("/")[0], []).append((label.split("/")[1], rep))
        for kind, cols in sorted(by_model.items()):
            run.write_bytes(f"report/activity_table_{kind}.csv", activity_table_csv(cols))
    if co:
        lines = ["mode,model,baseline_recall_mal,contaminated_recall_mal,contaminated_recall_ben\n"]
        for d in co:
            for kind, m in sorted(d["models"].items()):
                vals = [m["baseline"]["recall_mal"], m["contaminated"]["recall_mal"],
                        m["contaminated_on_original_test"]["recall_ben"]]
                lines.append(",".join([d["mode"], kind] + ["" if v is None else f"{v:.4f}" for v in vals]) + "\n")
        run.write_bytes("report/adversarial_table.csv", "".join(lines).encode())
    for sub in ("similarity", "cluster"):
        for p in sorted(glob.glob(str(run.out / sub / "*.csv"))):
            if sub == "cluster" and "assignments" in p:
                continue
            run.write_bytes(f"report/heatmap_{sub}_{Path(p).name}", Path(p).read_bytes())


COMMANDS = {
    "ingest": cmd_ingest, "features": cmd_features, "similarity": cmd_similarity, "cluster": cmd_cluster,
    "split": cmd_split, "train": cmd_train, "evaluate": cmd_evaluate, "advgen": cmd_advgen,
    "contaminate": cmd_contaminate, "synth": cmd_synth, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ethbias", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config-file", "-c", help="YAML/JSON config document")
    common.add_argument("--seed", type=int, help="override the root seed")
    common.add_argument("--out-dir", help="override the output directory")
    common.add_argument("--epoch-seconds", type=int, help="override the epoch width")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "ingest":
            p.add_argument("--transactions", nargs="+")
            p.add_argument("--labels")
        if name == "cluster":
            p.add_argument("--k", type=int)
        if name in ("split", "train"):
            p.add_argument("--config", help="split configuration C0-C5")
            p.add_argument("--focus", help="focus activity for C1-C4")
        if name == "train":
            p.add_argument("--model", required=True, choices=KINDS)
        if name == "evaluate":
            p.add_argument("--configs", nargs="+", choices=CONFIGS)
            p.add_argument("--models", nargs="+", choices=KINDS)
            p.add_argument("--repeats", type=int)
            p.add_argument("--focus")
        if name == "advgen":
            p.add_argument("--plan", help="JSON/YAML file mapping activity -> count")
        if name == "contaminate":
            p.add_argument("--mode", choices=("fraction_1", "fraction_5", "all_80"))
            p.add_argument("--models", nargs="+", choices=KINDS)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config_file, {"seed": args.seed, "out_dir": args.out_dir,
                                             "epoch_seconds": args.epoch_seconds})
        COMMANDS[args.command](Run(cfg), args)
    except CliError as e:
        print(f"error[{e.category}]: {e}", file=sys.stderr)
        return e.code
    except IneligibleActivityError as e:
        print(f"error[ineligible-activity]: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ParseError, InsufficientDataError, ValueError) as e:
        print(f"error[data]: {e}", file=sys.stderr)
        return EXIT_DATA
    except (FetchError, ExperimentError, FloatingPointError) as e:
        print(f"error[runtime]: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
