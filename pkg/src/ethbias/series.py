"""Per-account temporal activity series and burst detection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .txio import Ledger, Transaction

WEI_PER_ETHER = 10**18
WEI_PER_GWEI = 10**9


class NoActivityError(ValueError):
    pass


@dataclass(frozen=True)
class EpochConfig:
    epoch_seconds: int = 3600
    burst_sigma: float = 2.0
    include_failed: bool = False

    def __post_init__(self):
        if self.epoch_seconds < 1:
            raise ValueError("epoch_seconds must be >= 1")
        if self.burst_sigma < 0:
            raise ValueError("burst_sigma must be >= 0")


def to_ether(wei: int) -> float:
    return wei / WEI_PER_ETHER


@dataclass(frozen=True)
class AccountProfile:
    address: str
    in_txs: tuple[Transaction, ...]
    out_txs: tuple[Transaction, ...]
    first_epoch: int
    indegree: np.ndarray
    outdegree: np.ndarray
    balance_in: np.ndarray
    balance_out: np.ndarray
    max_in_payment: np.ndarray
    max_out_payment: np.ndarray
    fee: np.ndarray
    attractiveness: np.ndarray
    inter_event_times: np.ndarray
    gas_price_sequence: np.ndarray
    epoch_seconds: int = 3600

    @property
    def n_epochs(self) -> int:
        return len(self.indegree)

    @property
    def transactions(self) -> list[Transaction]:
        """Merged in+out stream; a self-transfer appears once."""
        merged = {tx.tx_hash: tx for tx in self.in_txs + self.out_txs}
        return sorted(merged.values(), key=lambda t: (t.timestamp, t.block_number, t.tx_hash))


@dataclass(frozen=True)
class BurstReport:
    series_name: str
    threshold: float
    event_indices: tuple[int, ...]
    longest_run: int
    first_instance: int | None

    @property
    def count(self) -> int:
        return len(self.event_indices)


def _epoch_of(ts: int, width: int) -> int:
    return ts // width


def build_profile(ledger: Ledger, address: str, cfg: EpochConfig = EpochConfig()) -> AccountProfile:
    """Bucket an account's transactions into contiguous per-epoch series."""
    address = address.lower()
    txs = ledger.transactions_of(address)
    if not cfg.include_failed:
        txs = [t for t in txs if not t.is_error]
    if not txs:
        raise NoActivityError(f"no activity for {address}")
    return profile_from_transactions(address, txs, cfg)


def profile_from_transactions(address: str, txs, cfg: EpochConfig = EpochConfig()) -> AccountProfile:
    key = lambda t: (t.timestamp, t.block_number, t.tx_hash)  # noqa: E731
    txs = sorted(txs, key=key)
    if not txs:
        raise NoActivityError(f"no activity for {address}")
    in_txs = tuple(t for t in txs if t.to_addr == address)
    out_txs = tuple(t for t in txs if t.from_addr == address)
    w = cfg.epoch_seconds
    e0 = _epoch_of(txs[0].timestamp, w)
    n = _epoch_of(txs[-1].timestamp, w) - e0 + 1

    indeg = np.zeros(n)
    outdeg = np.zeros(n)
    bal_in = np.zeros(n)
    bal_out = np.zeros(n)
    max_in = np.zeros(n)
    max_out = np.zeros(n)
    fee = np.zeros(n)
    for t in in_txs:
        e = _epoch_of(t.timestamp, w) - e0
        v = to_ether(t.value)
        indeg[e] += 1
        bal_in[e] += v
        max_in[e] = max(max_in[e], v)
    for t in out_txs:
        e = _epoch_of(t.timestamp, w) - e0
        v = to_ether(t.value)
        outdeg[e] += 1
        bal_out[e] += v
        max_out[e] = max(max_out[e], v)
        fee[e] += to_ether(t.fee_wei)

    times = np.array([t.timestamp for t in txs], dtype=float)
    prof = AccountProfile(
        address=address,
        in_txs=in_txs,
        out_txs=out_txs,
        first_epoch=e0,
        indegree=indeg,
        outdegree=outdeg,
        balance_in=bal_in,
        balance_out=bal_out,
        max_in_payment=max_in,
        max_out_payment=max_out,
        fee=fee,
        attractiveness=np.zeros(n),
        inter_event_times=np.diff(times),
        gas_price_sequence=np.array([t.gas_price / WEI_PER_GWEI for t in txs], dtype=float),
        epoch_seconds=w,
    )
    object.__setattr__(prof, "attractiveness", attractiveness_series(prof))
    return prof


def attractiveness_series(profile: AccountProfile) -> np.ndarray:
    """Per epoch: share of that epoch's distinct senders never seen in an earlier epoch.

    Epochs without receipts score 0.  Novelty is cumulative over the account's
    whole history, not a sliding window.
    """
    w = profile.epoch_seconds
    senders_by_epoch: dict[int, set[str]] = {}
    for t in profile.in_txs:
        senders_by_epoch.setdefault(_epoch_of(t.timestamp, w) - profile.first_epoch, set()).add(t.from_addr)
    out = np.zeros(profile.n_epochs)
    seen: set[str] = set()
    for e in sorted(senders_by_epoch):
        senders = senders_by_epoch[e]
        out[e] = len(senders - seen) / len(senders)
        seen |= senders
    return out


def detect_bursts(series, threshold_mode: str = "sigma", param: float = 2.0, name: str = "") -> BurstReport:
    """Strict exceedances of a threshold.

    ``sigma``: threshold = mean + param * population std of the series.
    ``absolute``: threshold = param.
    """
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("detect_bursts: empty series")
    if threshold_mode == "sigma":
        # constant series: mean may round below the value, which would fake exceedances
        thr = float(x[0]) if x.min() == x.max() else float(x.mean() + param * x.std())
    elif threshold_mode == "absolute":
        thr = float(param)
    else:
        raise ValueError(f"unknown threshold_mode {threshold_mode!r}")
    above = x > thr
    idx = tuple(int(i) for i in np.flatnonzero(above))
    longest = run = 0
    for a in above:
        run = run + 1 if a else 0
        longest = max(longest, run)
    return BurstReport(name, thr, idx, longest, idx[0] if idx else None)
