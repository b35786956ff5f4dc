"""The 59-entry account feature vector.

Every entry is a deterministic function of an :class:`AccountProfile`, the
undirected transaction graph and the ledger snapshot time.  Features whose
substrate is empty (e.g. inter-event statistics of a one-transaction account)
take the value 0 so downstream models always see finite input.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import betainc

from .series import AccountProfile, EpochConfig, detect_bursts, to_ether
from .txio import Ledger

CATALOG_VERSION = "catalog-59/1"
N_FEATURES = 59
CWT_WIDTHS = (2, 5, 10, 20)


@dataclass(frozen=True)
class FeatureSpec:
    name: str           # CSV column / canonical name
    formula: str        # formula id
    source: str         # source series
    param: object = None
    listing_name: str = ""  # listing string as printed (typos kept)


def _s(name, formula, source, param=None, listing_name=None):
    return FeatureSpec(name, formula, source, param, listing_name or name)


_CWT = "widths_(2, 5, 10, 20)__coeff_0__w_{}"

CATALOG: tuple[FeatureSpec, ...] = (
    _s("indegreeTimeInv", "time_inv", "indegree"),
    _s("outdegreeTimeInv", "time_inv", "outdegree"),
    _s("degreeTimeInv", "time_inv", "degree"),
    _s("numberOfburstTemporalInOut", "burst_count", "ittime"),
    _s("longestBurstTemporalInOut", "burst_longest", "ittime"),
    _s("numberOfburstTemporalIn", "burst_count", "ittime_in"),
    _s("longestBurstTemporalIn", "burst_longest", "ittime_in"),
    _s("numberOfburstTemporalOut", "burst_count", "ittime_out"),
    _s("longestBurstTemporalOut", "burst_longest", "ittime_out"),
    _s("numberOfburstDegreeInOut", "burst_count", "degree"),
    _s("longestBurstDegreeInOutAtTime", "burst_longest", "degree"),
    _s("numberOfburstDegreeIn", "burst_count", "indegree"),
    _s("longestBurstDegreeInAtTime", "burst_longest", "indegree"),
    _s("numberOfburstDegreeOut", "burst_count", "outdegree"),
    _s("longestBurstDegreeOutAtTime", "burst_longest", "outdegree"),
    _s("zeroTransactions", "zero_value_count", "transactions"),
    _s("totalBal", "net_balance", "transactions"),
    _s("transactedFirst", "since_first", "transactions"),
    _s("transactedLast", "since_last", "transactions"),
    _s("activeDuration", "active_duration", "transactions"),
    _s("averagePerInBal", "average_in", "transactions"),
    _s("uniqueIn", "unique_senders", "transactions"),
    _s("lastActiveSince", "since_last", "transactions"),
    _s("indegree__index_mass_quantile__q_0.1", "index_mass_quantile", "indegree", 0.1),
    _s("indegree__energy_ratio_by_chunks__num_segments_10__segment_focus_0", "energy_ratio_by_chunks", "indegree", 0,
       "indegree__energy_ratio_by_chunks__num_segments_10__-segment_focus_0"),
    _s('indegree__linear_trend__attr_"pvalue"', "linear_trend_pvalue", "indegree"),
    _s("ittime__quantile__q_0.7", "quantile", "ittime", 0.7),
    _s('ittime__fft_coefficient__coeff_0__attr_"real"', "fft_coefficient_0_real", "ittime"),
    _s("ittime__median", "median", "ittime"),
    _s("outdegree__energy_ratio_by_chunks__num_segments_10__segment_focus_0", "energy_ratio_by_chunks", "outdegree", 0,
       "outdegree__energy_ratio_by_chunks__num_segments_10-__segment_focus_0"),
    _s("outdegree__energy_ratio_by_chunks__num_segments_10__segment_focus_1", "energy_ratio_by_chunks", "outdegree", 1,
       "outdegree__enegy_ratio_by_chunks__-num_segments_10__segment_focus_1"),
    _s('outdegree__fft_coefficient__coeff_0__attr_"real"', "fft_coefficient_0_real", "outdegree"),
    _s("gasPrice__quantile__q_0.2", "quantile", "gasPrice", 0.2),
    _s("gasPrice__quantile__q_0.1", "quantile", "gasPrice", 0.1),
    _s("gasPrice__cwt_coefficients__" + _CWT.format(20), "cwt_coefficient_0", "gasPrice", 20),
    _s("attractiveness__median", "median", "attractiveness"),
    _s("attractiveness__quantile__q_0.4", "quantile", "attractiveness", 0.4,
       "attractiveness__quantile__q_0_0.4"),
    _s("attractiveness__mean", "mean", "attractiveness"),
    _s("balanceOut__quantile__q_0.1", "quantile", "balanceOut", 0.1),
    _s("balanceOut__quantile__q_0.3", "quantile", "balanceOut", 0.3),
    _s("balanceOut__cwt_coefficients__" + _CWT.format(2), "cwt_coefficient_0", "balanceOut", 2),
    _s("balanceIn__quantile__q_0.4", "quantile", "balanceIn", 0.4),
    _s("balanceIn__cwt_coefficients__" + _CWT.format(20), "cwt_coefficient_0", "balanceIn", 20,
       "balanceIn-__cwt_coefficients__widths_(2, 5, 10,20)__coeff_0__w_20"),
    _s("balanceIn__quantile__q_0.3", "quantile", "balanceIn", 0.3),
    _s("maxInPayment__quantile__q_0.3", "quantile", "maxInPayment", 0.3),
    _s("maxInPayment__quantile__q_0.2", "quantile", "maxInPayment", 0.2),
    _s("maxInPayment__cwt_coefficients__" + _CWT.format(5), "cwt_coefficient_0", "maxInPayment", 5),
    _s("maxOutPayment__quantile__q_0.6", "quantile", "maxOutPayment", 0.6),
    _s("maxOutPayment__quantile__q_0.1", "quantile", "maxOutPayment", 0.1),
    _s("maxOutPayment__cwt_coefficients__" + _CWT.format(2), "cwt_coefficient_0", "maxOutPayment", 2),
    _s("clusteringCoeff", "clustering_coefficient", "graph"),
    _s("burstCount_gasPrice", "burst_count", "gasPrice"),
    _s("burstCount_balanceIn", "burst_count", "balanceIn"),
    _s("burstCount_balanceOut", "burst_count", "balanceOut"),
    _s("burstInstance_indegree", "burst_first", "indegree"),
    # listed twice in the source catalog; computed once
    _s("burstInstance_outdegree", "burst_first", "outdegree"),
    _s("burstInstance_maxInPayment", "burst_first", "maxInPayment"),
    _s("burstInstance_maxOutPayment", "burst_first", "maxOutPayment"),
    _s("burstInstance_gasPrice", "burst_first", "gasPrice"),
)

FEATURE_NAMES: tuple[str, ...] = tuple(s.name for s in CATALOG)
assert len(FEATURE_NAMES) == N_FEATURES and len(set(FEATURE_NAMES)) == N_FEATURES


@dataclass(frozen=True)
class FeatureVector:
    address: str
    values: tuple[float, ...]
    catalog_version: str = CATALOG_VERSION

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values))


# --- time-series primitives ------------------------------------------------

class TsResult(NamedTuple):
    value: float
    degenerate: bool


def ts_quantile(x, q: float) -> float:
    # linear interpolation between closest ranks
    return float(np.quantile(x, q))


def energy_ratio_by_chunks(x, num_segments: int, focus: int) -> float:
    x = np.asarray(x, dtype=float)
    total = float(np.sum(x * x))
    if total == 0.0:
        return 0.0
    chunk = np.array_split(x, num_segments)[focus]
    return float(np.sum(chunk * chunk)) / total


def index_mass_quantile(x, q: float) -> float:
    a = np.abs(np.asarray(x, dtype=float))
    s = a.sum()
    if s == 0:
        return 0.0
    cum = np.cumsum(a) / s
    return float(np.argmax(cum >= q) + 1) / len(a)


def linear_trend_pvalue(x) -> float:
    """Two-sided p-value of the least-squares slope of x against its index."""
    y = np.asarray(x, dtype=float)
    n = len(y)
    if n < 3:
        return 0.0
    t = np.arange(n, dtype=float)
    tm, ym = t.mean(), y.mean()
    sxx = float(np.sum((t - tm) ** 2))
    sxy = float(np.sum((t - tm) * (y - ym)))
    slope = sxy / sxx
    resid = y - (ym + slope * (t - tm))
    sse = float(np.sum(resid * resid))
    if sse == 0.0:
        return 0.0
    df = n - 2
    se = math.sqrt(sse / df / sxx)
    tstat = slope / se
    return float(betainc(0.5 * df, 0.5, df / (df + tstat * tstat)))


def ricker(points: int, width: float) -> np.ndarray:
    a = 2.0 / (math.sqrt(3.0 * width) * math.pi ** 0.25)
    t = np.arange(points, dtype=float) - (points - 1.0) / 2.0
    tsq = t * t
    wsq = width * width
    return a * (1.0 - tsq / wsq) * np.exp(-tsq / (2.0 * wsq))


def cwt_coefficient(x, width: int, coeff: int = 0) -> float:
    """Same-length convolution with a Ricker wavelet of length min(10*width, len(x))."""
    x = np.asarray(x, dtype=float)
    n = min(10 * width, len(x))
    out = np.convolve(x, ricker(n, width)[::-1], mode="same")
    return float(out[coeff]) if coeff < len(out) else 0.0


_TS_FORMULAS = {
    "quantile": lambda x, p: ts_quantile(x, p),
    "median": lambda x, p: float(np.median(x)),
    "mean": lambda x, p: float(np.mean(x)),
    "fft_coefficient_0_real": lambda x, p: float(np.fft.rfft(x)[0].real),
    "energy_ratio_by_chunks": lambda x, p: energy_ratio_by_chunks(x, 10, p),
    "index_mass_quantile": lambda x, p: index_mass_quantile(x, p),
    "linear_trend_pvalue": lambda x, p: linear_trend_pvalue(x),
    "cwt_coefficient_0": lambda x, p: cwt_coefficient(x, p, 0),
}


def ts_feature(formula: str, series, param=None) -> TsResult:
    """Evaluate one time-series formula; an empty series yields (0, degenerate)."""
    if formula not in _TS_FORMULAS:
        raise KeyError(f"unknown time-series formula {formula!r}")
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        return TsResult(0.0, True)
    return TsResult(_TS_FORMULAS[formula](x, param), False)


# --- graph -----------------------------------------------------------------

class NeighborIndex:
    """Undirected, self-loop-free adjacency of the transaction graph."""

    def __init__(self, adjacency: dict[str, set[str]]):
        self.adj = adjacency

    @classmethod
    def from_ledger(cls, ledger: Ledger, include_failed: bool = False) -> "NeighborIndex":
        adj: dict[str, set[str]] = {}
        for tx in ledger.transactions:
            if tx.is_error and not include_failed:
                continue
            a = tx.from_addr
            adj.setdefault(a, set())
            b = tx.to_addr
            if b is None or b == a:
                continue
            adj[a].add(b)
            adj.setdefault(b, set()).add(a)
        return cls(adj)

    @classmethod
    def from_edges(cls, edges) -> "NeighborIndex":
        adj: dict[str, set[str]] = {}
        for a, b in edges:
            adj.setdefault(a, set())
            adj.setdefault(b, set())
            if a != b:
                adj[a].add(b)
                adj[b].add(a)
        return cls(adj)

    def __contains__(self, address) -> bool:
        return address in self.adj


def clustering_coefficient(graph: NeighborIndex, address: str) -> float:
    if address not in graph.adj:
        raise KeyError(f"unknown address {address}")
    nbrs = graph.adj[address]
    k = len(nbrs)
    if k < 2:
        return 0.0
    links = sum(len(graph.adj[u] & nbrs) for u in nbrs) // 2
    return 2.0 * links / (k * (k - 1))


# --- account-level features ------------------------------------------------

def active_duration_epochs(profile: AccountProfile) -> int:
    return profile.n_epochs - 1


def degree_time_inverse(profile: AccountProfile, snapshot_time: int | None = None) -> tuple[float, float, float]:
    """In/out/total degree per epoch of activity (duration clamped to >= 1 epoch).

    ``snapshot_time`` is accepted for signature symmetry with the other
    recency features; the ratio does not depend on it.
    """
    dur = max(active_duration_epochs(profile), 1)
    n_in = len(profile.in_txs)
    n_out = len(profile.out_txs)
    return n_in / dur, n_out / dur, (n_in + n_out) / dur


def _inter_event(txs) -> np.ndarray:
    return np.diff(np.array([t.timestamp for t in txs], dtype=float))


def _sources(profile: AccountProfile) -> dict[str, np.ndarray]:
    return {
        "indegree": profile.indegree,
        "outdegree": profile.outdegree,
        "degree": profile.indegree + profile.outdegree,
        "ittime": profile.inter_event_times,
        "ittime_in": _inter_event(profile.in_txs),
        "ittime_out": _inter_event(profile.out_txs),
        "gasPrice": profile.gas_price_sequence,
        "attractiveness": profile.attractiveness,
        "balanceIn": profile.balance_in,
        "balanceOut": profile.balance_out,
        "maxInPayment": profile.max_in_payment,
        "maxOutPayment": profile.max_out_payment,
    }


def extract_features(profile: AccountProfile, graph: NeighborIndex, cfg: EpochConfig = EpochConfig(),
                     snapshot_time: int | None = None) -> FeatureVector:
    txs = profile.transactions
    if not txs:
        raise ValueError("profile has no transactions")
    first, last = txs[0].timestamp, txs[-1].timestamp
    if snapshot_time is None:
        snapshot_time = last
    sources = _sources(profile)
    bursts = {}

    def burst(src):
        if src not in bursts:
            x = sources[src]
            bursts[src] = detect_bursts(x, "sigma", cfg.burst_sigma, src) if len(x) else None
        return bursts[src]

    tinv = dict(zip(("indegree", "outdegree", "degree"), degree_time_inverse(profile, snapshot_time)))
    in_value = sum(to_ether(t.value) for t in profile.in_txs)
    out_value = sum(to_ether(t.value) for t in profile.out_txs)
    n_in = len(profile.in_txs)

    values = []
    for spec in CATALOG:
        f = spec.formula
        if f == "time_inv":
            v = tinv[spec.source]
        elif f == "burst_count":
            b = burst(spec.source)
            v = float(b.count) if b else 0.0
        elif f == "burst_longest":
            b = burst(spec.source)
            v = float(b.longest_run) if b else 0.0
        elif f == "burst_first":
            b = burst(spec.source)
            v = float(b.first_instance) if b and b.first_instance is not None else 0.0
        elif f == "zero_value_count":
            v = float(sum(1 for t in txs if t.value == 0))
        elif f == "net_balance":
            v = in_value - out_value
        elif f == "since_first":
            v = float(snapshot_time - first)
        elif f == "since_last":
            v = float(snapshot_time - last)
        elif f == "active_duration":
            v = float(last - first)
        elif f == "average_in":
            v = in_value / n_in if n_in else 0.0
        elif f == "unique_senders":
            v = float(len({t.from_addr for t in profile.in_txs}))
        elif f == "clustering_coefficient":
            v = clustering_coefficient(graph, profile.address) if profile.address in graph else 0.0
        else:
            v = ts_feature(f, sources[spec.source], spec.param).value
        values.append(float(v))

    if len(values) != N_FEATURES:
        raise AssertionError(f"feature vector has {len(values)} entries, expected {N_FEATURES}")
    if not all(math.isfinite(v) for v in values):
        bad = [n for n, v in zip(FEATURE_NAMES, values) if not math.isfinite(v)]
        raise ValueError(f"non-finite features for {profile.address}: {bad}")
    return FeatureVector(profile.address, tuple(values))


# --- feature matrix CSV ----------------------------------------------------

META_COLUMNS = ("address", "klass", "activity", "source")


def write_feature_csv(rows, stream=None) -> bytes:
    """rows: iterable of (FeatureVector or (address, values), klass, activity, source)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(META_COLUMNS + FEATURE_NAMES)
    for vec, klass, activity, source in rows:
        addr, vals = (vec.address, vec.values) if isinstance(vec, FeatureVector) else vec
        w.writerow([addr, klass, activity, source] + [repr(float(v)) for v in vals])
    data = buf.getvalue().encode("utf-8")
    if stream is not None:
        stream.write(data)
    return data


def read_feature_csv(stream):
    """Inverse of :func:`write_feature_csv`: list of (address, values, klass, activity, source)."""
    text = stream.read() if hasattr(stream, "read") else stream
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header[:4]) != META_COLUMNS or tuple(header[4:]) != FEATURE_NAMES:
        raise ValueError("feature CSV header does not match the feature catalog")
    out = []
    for row in reader:
        out.append((row[0], np.array([float(v) for v in row[4:]]), row[1], row[2], row[3]))
    return out
