"""Deterministic synthetic ledgers with labeled behavioural archetypes.

benign    steady small transfers with a stable neighbour set
phishing  many small inflows from never-seen senders, a few cash-outs
hack      one large inflow, an idle stretch, then a fan-out burst to fresh addresses
gambling  periodic medium transfers to and from one shared house address

Archetype parameters live in ``data/archetypes_v1.json``.
"""
from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources

import numpy as np

from .txio import AccountLabel, Ledger, Transaction

ARCHETYPE_FILE = "archetypes_v1.json"
ALIASES = {"benign-regular": "benign", "phishing-like": "phishing", "hack-like": "hack", "gambling-like": "gambling"}
GAS_LIMIT = 21000
WEI = 10**18
GWEI = 10**9


def load_archetypes(path=None) -> dict:
    if path is None:
        return json.loads(resources.files("ethbias").joinpath("data", ARCHETYPE_FILE).read_text())
    with open(path) as f:
        return json.load(f)


def normalize_plan(plan: dict) -> dict[str, dict]:
    """Accept ``{activity: count}`` or ``{activity: {archetype, count, params}}``.

    With the short form the activity name must be an archetype name.
    """
    out = {}
    for activity, entry in plan.items():
        if isinstance(entry, int):
            entry = {"archetype": activity, "count": entry}
        entry = dict(entry)
        arch = ALIASES.get(entry.get("archetype", activity), entry.get("archetype", activity))
        entry["archetype"] = arch
        entry.setdefault("params", {})
        out[activity] = entry
    return out


class _Builder:
    def __init__(self, seed: int, spec: dict):
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        self.spec = spec
        self.txs: list[Transaction] = []
        self.n = 0
        self.t0 = int(spec["start_time"])
        self.t1 = self.t0 + int(spec["window_days"]) * 86400

    def address(self) -> str:
        return "0x" + self.rng.bytes(20).hex()

    def tx(self, ts, frm, to, value_wei, gas_gwei):
        self.n += 1
        h = hashlib.sha256(f"{self.seed}:{self.n}".encode()).hexdigest()
        gp = max(1, int(round(gas_gwei * GWEI)))
        self.txs.append(Transaction("0x" + h, 9_000_000 + (int(ts) - self.t0) // 13, int(ts), frm, to,
                                    int(value_wei), GAS_LIMIT, gp, False))

    def gas(self, p):
        mu, sd = p["gas_gwei"]
        return max(1.0, float(self.rng.normal(mu, sd)))

    def ether(self, x) -> int:
        # quantize to gwei so values are exact integers of wei
        return int(round(max(x, 0.0) * 1e9)) * GWEI

    def between(self, lo, hi) -> int:
        return int(self.rng.integers(lo, hi + 1))


def generate_ledger(plan: dict, seed: int = 0, archetypes: dict | None = None):
    """Build a ledger from an archetype plan; returns (Ledger, labels).

    ``plan`` maps activity -> count or -> {"archetype", "count", "params"}.
    Counterparties that are not plan accounts are left unlabeled.
    """
    spec = copy.deepcopy(archetypes or load_archetypes())
    plan = normalize_plan(plan)
    if sum(int(e["count"]) for e in plan.values()) <= 0:
        raise ValueError("plan has zero accounts")
    b = _Builder(seed, spec)

    communities = []
    for _ in range(spec["n_communities"]):
        members = [b.address() for _ in range(spec["community_size"])]
        communities.append(members)
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                if b.rng.random() < spec["community_link_prob"]:
                    ts = b.between(b.t0, b.t1)
                    b.tx(ts, members[i], members[j], b.ether(b.rng.lognormal(0.0, 1.0)), 20.0)
    house = b.address()

    labels: dict[str, AccountLabel] = {}
    for activity in sorted(plan):
        entry = plan[activity]
        arch = entry["archetype"]
        if arch not in spec["archetypes"]:
            raise ValueError(f"unknown archetype {arch!r} for activity {activity!r}")
        p = {**spec["archetypes"][arch], **entry["params"]}
        klass = p["klass"]
        for _ in range(int(entry["count"])):
            addr = b.address()
            labels[addr] = AccountLabel(addr, klass, "benign" if klass == "benign" else activity, "synthetic")
            _emit(b, arch, p, addr, communities, house)

    snapshot = b.t1 + 86400
    return Ledger(tuple(b.txs), labels, snapshot), labels


def _emit(b: _Builder, arch, p, addr, communities, house):
    rng = b.rng
    if arch == "benign":
        comm = communities[int(rng.integers(len(communities)))]
        k = min(b.between(*p["n_neighbors"]), len(comm))
        nbrs = [comm[i] for i in sorted(rng.choice(len(comm), size=k, replace=False))]
        for _ in range(b.between(*p["n_tx"])):
            ts = b.between(b.t0, b.t1)
            other = nbrs[int(rng.integers(k))]
            v = b.ether(rng.lognormal(p["value_log_mean"], p["value_log_sd"]))
            if rng.random() < p["p_in"]:
                b.tx(ts, other, addr, v, b.gas(p))
            else:
                b.tx(ts, addr, other, v, b.gas(p))
    elif arch == "phishing":
        span = b.between(*p["active_hours"]) * 3600
        start = b.between(b.t0, b.t1 - span)
        n_in = b.between(*p["n_in"])
        total = 0
        for _ in range(n_in):
            v = b.ether(rng.lognormal(p["value_log_mean"], p["value_log_sd"]))
            total += v
            b.tx(start + b.between(0, span), b.address(), addr, v, b.gas(p))
        cashout = b.address()
        n_out = b.between(*p["n_out"])
        for j in range(n_out):
            b.tx(start + span + 600 * (j + 1), addr, cashout, total // (n_out + 1), b.gas(p))
    elif arch == "hack":
        idle = b.between(*p["idle_hours"]) * 3600
        start = b.between(b.t0, b.t1 - idle - 3600)
        amount = b.ether(rng.uniform(*p["inflow_ether"]))
        b.tx(start, b.address(), addr, amount, b.gas(p))
        n_out = b.between(*p["n_out"])
        # all outflows inside one epoch-aligned hour
        burst = start + idle - (start + idle) % 3600
        for j in range(n_out):
            b.tx(burst + j * (3000 // n_out), addr, b.address(), amount // (n_out + 1), b.gas(p))
    elif arch == "gambling":
        period = b.between(*p["period_hours"]) * 3600
        n = b.between(*p["n_rounds"])
        start = b.between(b.t0, max(b.t0, b.t1 - n * period))
        for j in range(n):
            ts = start + j * period + b.between(0, 600)
            v = b.ether(rng.uniform(*p["value_ether"]))
            if j % 2 == 0:
                b.tx(ts, addr, house, v, b.gas(p))
            else:
                b.tx(ts, house, addr, v, b.gas(p))
    else:
        raise ValueError(f"unknown archetype {arch!r}")
