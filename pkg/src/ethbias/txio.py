"""Transaction-log and label ingestion.

Transactions follow the Etherscan ``account/txlist`` record layout: every
integer is string-encoded and addresses are hex.  Values stay as Python ints
(wei) here; conversion to ether floats happens in :mod:`ethbias.series`.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import requests

log = logging.getLogger(__name__)

ADDRESS_RE = re.compile(r"^0x[0-9a-f]{40}$")
HASH_RE = re.compile(r"^0x[0-9a-f]{64}$")
UINT256_MAX = 2**256 - 1

TX_FIELDS = ("blockNumber", "timeStamp", "hash", "from", "to", "value", "gas", "gasPrice", "isError")
LABEL_FIELDS = ("address", "klass", "activity", "source")
KLASSES = ("malicious", "benign")
SOURCES = ("Da", "Db", "Dg", "synthetic")
BENIGN = "benign"


class ParseError(ValueError):
    """Malformed input record; carries the 1-based line number and field."""

    def __init__(self, line: int, field_name: str, msg: str):
        self.line = line
        self.field = field_name
        super().__init__(f"line {line}: field {field_name!r}: {msg}")


class FetchError(RuntimeError):
    pass


@dataclass(frozen=True)
class Transaction:
    tx_hash: str
    block_number: int
    timestamp: int
    from_addr: str
    to_addr: str | None
    value: int
    gas: int
    gas_price: int
    is_error: bool = False

    @property
    def fee_wei(self) -> int:
        return self.gas * self.gas_price


@dataclass(frozen=True)
class AccountLabel:
    address: str
    klass: str
    activity: str
    source: str = "Da"

    @property
    def is_malicious(self) -> bool:
        return self.klass == "malicious"


@dataclass(frozen=True)
class Ledger:
    transactions: tuple[Transaction, ...]
    labels: Mapping[str, AccountLabel] = field(default_factory=dict)
    snapshot_time: int | None = None

    def __post_init__(self):
        txs = tuple(sorted(self.transactions, key=_sort_key))
        object.__setattr__(self, "transactions", txs)
        last = txs[-1].timestamp if txs else 0
        if self.snapshot_time is None:
            object.__setattr__(self, "snapshot_time", last)
        elif self.snapshot_time < last:
            raise ValueError(f"snapshot_time {self.snapshot_time} precedes last transaction at {last}")

    @cached_property
    def by_address(self) -> dict[str, list[Transaction]]:
        """Address -> time-sorted transactions touching it (each tx listed once per address)."""
        index: dict[str, list[Transaction]] = {}
        for tx in self.transactions:
            index.setdefault(tx.from_addr, []).append(tx)
            if tx.to_addr is not None and tx.to_addr != tx.from_addr:
                index.setdefault(tx.to_addr, []).append(tx)
        return index

    def transactions_of(self, address: str) -> list[Transaction]:
        return self.by_address.get(address.lower(), [])


def _sort_key(tx: Transaction):
    return (tx.timestamp, tx.block_number, tx.tx_hash)


# --- parsing ---------------------------------------------------------------

def _text_lines(stream) -> Iterable[str]:
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    for raw in stream:
        yield raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw


def _uint(rec, key, line, bits=None, required=True):
    raw = rec.get(key)
    if raw is None or raw == "":
        if required:
            raise ParseError(line, key, "missing")
        return 0
    try:
        val = int(str(raw).strip(), 0) if str(raw).strip().startswith("0x") else int(str(raw).strip())
    except ValueError:
        raise ParseError(line, key, f"not an integer: {raw!r}") from None
    if val < 0:
        raise ParseError(line, key, "negative")
    if bits is not None and val > 2**bits - 1:
        raise ParseError(line, key, f"exceeds {bits} bits")
    return val


def _addr(rec, key, line, required=True):
    raw = rec.get(key)
    if raw is None or str(raw).strip() == "":
        if required:
            raise ParseError(line, key, "missing address")
        return None
    a = str(raw).strip().lower()
    if not ADDRESS_RE.match(a):
        raise ParseError(line, key, f"malformed address {raw!r}")
    return a


def record_to_transaction(rec: Mapping, line: int = 1) -> Transaction:
    """Map one Etherscan-style record (string-encoded ints) to a Transaction."""
    tx_hash = str(rec.get("hash") or "").strip().lower()
    if not HASH_RE.match(tx_hash):
        raise ParseError(line, "hash", f"malformed hash {rec.get('hash')!r}")
    ts = _uint(rec, "timeStamp", line)
    if ts <= 0:
        raise ParseError(line, "timeStamp", "must be positive")
    err = str(rec.get("isError", "0")).strip()
    if err not in ("0", "1", ""):
        raise ParseError(line, "isError", f"expected 0 or 1, got {err!r}")
    return Transaction(
        tx_hash=tx_hash,
        block_number=_uint(rec, "blockNumber", line),
        timestamp=ts,
        from_addr=_addr(rec, "from", line),
        to_addr=_addr(rec, "to", line, required=False),
        value=_uint(rec, "value", line, bits=256),
        gas=_uint(rec, "gas", line),
        gas_price=_uint(rec, "gasPrice", line),
        is_error=err == "1",
    )


def transaction_to_record(tx: Transaction) -> dict[str, str]:
    return {
        "blockNumber": str(tx.block_number),
        "timeStamp": str(tx.timestamp),
        "hash": tx.tx_hash,
        "from": tx.from_addr,
        "to": tx.to_addr or "",
        "value": str(tx.value),
        "gas": str(tx.gas),
        "gasPrice": str(tx.gas_price),
        "isError": "1" if tx.is_error else "0",
    }


def _records(stream, fmt):
    if fmt == "jsonl":
        for lineno, line in enumerate(_text_lines(stream), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(lineno, "<json>", str(e)) from None
            if not isinstance(rec, dict):
                raise ParseError(lineno, "<json>", "expected an object")
            yield lineno, rec
    elif fmt == "csv":
        reader = csv.DictReader(_text_lines(stream))
        for rec in reader:
            # header is line 1
            yield reader.line_num, rec
    else:
        raise ValueError(f"unknown format {fmt!r}")


def parse_transactions(stream, fmt: str = "jsonl") -> list[Transaction]:
    """Parse a JSONL or CSV transaction stream; output sorted by timestamp.

    Failed (``isError=1``) records are kept with ``is_error`` set.
    Raises :class:`ParseError` on malformed rows or duplicate hashes.
    """
    seen: dict[str, int] = {}
    txs = []
    for lineno, rec in _records(stream, fmt):
        tx = record_to_transaction(rec, lineno)
        if tx.tx_hash in seen:
            raise ParseError(lineno, "hash", f"duplicate tx hash (first seen on line {seen[tx.tx_hash]})")
        seen[tx.tx_hash] = lineno
        txs.append(tx)
    txs.sort(key=_sort_key)
    return txs


def serialize_transactions(txs: Iterable[Transaction], fmt: str = "jsonl") -> bytes:
    buf = io.StringIO()
    if fmt == "jsonl":
        for tx in txs:
            buf.write(json.dumps(transaction_to_record(tx), separators=(",", ":")))
            buf.write("\n")
    elif fmt == "csv":
        w = csv.DictWriter(buf, fieldnames=TX_FIELDS, lineterminator="\n")
        w.writeheader()
        for tx in txs:
            w.writerow(transaction_to_record(tx))
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return buf.getvalue().encode("utf-8")


# --- labels ----------------------------------------------------------------

def load_labels(stream) -> dict[str, AccountLabel]:
    reader = csv.DictReader(_text_lines(stream))
    if reader.fieldnames is None:
        raise ParseError(1, "<header>", "missing header row")
    missing = [f for f in LABEL_FIELDS if f not in reader.fieldnames]
    if missing:
        raise ParseError(1, "<header>", f"missing columns {missing}")
    out: dict[str, AccountLabel] = {}
    for rec in reader:
        line = reader.line_num
        address = _addr(rec, "address", line)
        klass = (rec["klass"] or "").strip()
        if klass not in KLASSES:
            raise ParseError(line, "klass", f"expected one of {KLASSES}, got {klass!r}")
        activity = (rec["activity"] or "").strip()
        if not activity:
            raise ParseError(line, "activity", "empty")
        if klass == "benign" and activity != BENIGN:
            raise ParseError(line, "activity", "benign accounts must carry activity 'benign'")
        if klass == "malicious" and activity == BENIGN:
            raise ParseError(line, "activity", "malicious account tagged 'benign'")
        source = (rec["source"] or "").strip()
        if source not in SOURCES:
            raise ParseError(line, "source", f"expected one of {SOURCES}, got {source!r}")
        lab = AccountLabel(address, klass, activity, source)
        prev = out.get(address)
        if prev is not None and prev != lab:
            raise ParseError(
                line, "activity",
                f"address {address} already labeled {prev.klass}/{prev.activity}; "
                "each account carries exactly one activity",
            )
        out[address] = lab
    return out


def serialize_labels(labels: Mapping[str, AccountLabel]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LABEL_FIELDS)
    for addr in sorted(labels):
        lab = labels[addr]
        w.writerow([lab.address, lab.klass, lab.activity, lab.source])
    return buf.getvalue().encode("utf-8")


# --- live fetching ---------------------------------------------------------

def _rate_limited(payload) -> bool:
    if not isinstance(payload, dict):
        return False
    res = payload.get("result")
    return payload.get("status") == "0" and isinstance(res, str) and "rate limit" in res.lower()


def fetch_account_transactions(
    endpoint: str,
    api_key: str,
    address: str,
    page_size: int = 1000,
    *,
    min_interval: float = 0.25,
    max_attempts: int = 3,
    backoff: float = 1.0,
    session: requests.Session | None = None,
    sleep=time.sleep,
    timeout: float = 30.0,
) -> list[Transaction]:
    """Page through ``module=account&action=txlist`` until a short page.

    Each page is retried up to ``max_attempts`` times with exponential
    backoff on HTTP failures; rate-limit answers (HTTP 429 or Etherscan's
    "Max rate limit reached") back off and resume without consuming an attempt.
    """
    if page_size <= 0:
        raise ValueError("page_size must be positive")
    address = address.lower()
    sess = session or requests.Session()
    rows: list[str] = []
    page = 1
    last_request = None
    while True:
        params = {
            "module": "account", "action": "txlist", "address": address,
            "startblock": 0, "endblock": 99999999, "page": page,
            "offset": page_size, "sort": "asc", "apikey": api_key,
        }
        attempt = 0
        delay = backoff
        while True:
            if last_request is not None:
                wait = min_interval - (time.monotonic() - last_request)
                if wait > 0:
                    sleep(wait)
            last_request = time.monotonic()
            try:
                resp = sess.get(endpoint, params=params, timeout=timeout)
            except requests.RequestException as e:
                attempt += 1
                if attempt >= max_attempts:
                    raise FetchError(f"{address} page {page}: {e}") from e
                sleep(delay)
                delay *= 2
                continue
            if resp.status_code == 429:
                log.info("rate limited on %s page %d; backing off %.2fs", address, page, delay)
                sleep(delay)
                delay *= 2
                continue
            if resp.status_code >= 400:
                attempt += 1
                if attempt >= max_attempts:
                    raise FetchError(f"{address} page {page}: HTTP {resp.status_code}")
                sleep(delay)
                delay *= 2
                continue
            payload = resp.json()
            if _rate_limited(payload):
                sleep(delay)
                delay *= 2
                continue
            break
        result = payload.get("result") if isinstance(payload, dict) else None
        if not isinstance(result, list):
            if payload.get("message", "").startswith("No transactions"):
                result = []
            else:
                raise FetchError(f"{address} page {page}: unexpected payload {payload!r}")
        rows.extend(json.dumps(r) for r in result)
        if len(result) < page_size:
            break
        page += 1
    return parse_transactions("\n".join(rows), "jsonl")


def fetch_many(endpoint, api_key, addresses, page_size=1000, max_workers=4, **kw) -> dict[str, list[Transaction]]:
    """Fetch several addresses concurrently; result keyed and ordered by address."""
    addresses = sorted({a.lower() for a in addresses})
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futs = {a: pool.submit(fetch_account_transactions, endpoint, api_key, a, page_size, **kw) for a in addresses}
        return {a: futs[a].result() for a in addresses}


def merge_transactions(groups: Iterable[Iterable[Transaction]]) -> list[Transaction]:
    """Union of per-address fetches; a tx seen from both ends is kept once."""
    out: dict[str, Transaction] = {}
    for g in groups:
        for tx in g:
            prev = out.get(tx.tx_hash)
            if prev is not None and prev != tx:
                raise ValueError(f"conflicting records for {tx.tx_hash}")
            out[tx.tx_hash] = tx
    return sorted(out.values(), key=_sort_key)


# --- ledger files ----------------------------------------------------------

def read_ledger(tx_path, labels_path=None, snapshot_time=None, fmt=None) -> Ledger:
    fmt = fmt or ("csv" if str(tx_path).endswith(".csv") else "jsonl")
    with open(tx_path, "rb") as f:
        txs = parse_transactions(f, fmt)
    labels = {}
    if labels_path is not None:
        with open(labels_path, "rb") as f:
            labels = load_labels(f)
    return Ledger(tuple(txs), labels, snapshot_time)


def write_ledger(ledger: Ledger, tx_path, labels_path=None, fmt="jsonl") -> None:
    with open(tx_path, "wb") as f:
        f.write(serialize_transactions(ledger.transactions, fmt))
    if labels_path is not None:
        with open(labels_path, "wb") as f:
            f.write(serialize_labels(ledger.labels))
