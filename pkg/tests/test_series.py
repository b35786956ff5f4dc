import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ethbias.series import EpochConfig, NoActivityError, attractiveness_series, build_profile, detect_bursts
from helpers import E, addr, ledger, tx

ME = addr(1)


def test_single_incoming():
    p = build_profile(ledger(tx(1, 10, addr(2), ME, 5 * E)), ME)
    assert p.indegree.tolist() == [1]
    assert p.balance_in.tolist() == [5.0]
    assert p.inter_event_times.tolist() == []


def test_hand_bucketing():
    p = build_profile(ledger(tx(1, 0 + 3600 * 100, addr(2), ME), tx(2, 100 + 3600 * 100, addr(3), ME),
                             tx(3, 8000 + 3600 * 100, addr(4), ME)), ME)
    assert p.indegree.tolist() == [2, 0, 1]
    assert p.inter_event_times.tolist() == [100, 7900]


def test_sender_only_has_zero_attractiveness():
    p = build_profile(ledger(tx(1, 100, ME, addr(2)), tx(2, 9000, ME, addr(3))), ME)
    assert p.attractiveness.tolist() == [0, 0, 0]


def test_no_activity():
    with pytest.raises(NoActivityError):
        build_profile(ledger(tx(1, 100, addr(2), addr(3))), ME)


def test_failed_excluded_by_default():
    led = ledger(tx(1, 100, addr(2), ME, E), tx(2, 200, addr(3), ME, E, err=True))
    assert build_profile(led, ME).indegree.tolist() == [1]
    assert build_profile(led, ME, EpochConfig(include_failed=True)).indegree.tolist() == [2]


def test_only_failed_is_no_activity():
    with pytest.raises(NoActivityError):
        build_profile(ledger(tx(1, 100, addr(2), ME, err=True)), ME)


def test_fee_counts_outgoing_gas_times_price():
    p = build_profile(ledger(tx(1, 100, ME, addr(2), gas_price=2 * 10**9, gas=21000)), ME)
    assert p.fee.tolist() == [21000 * 2 * 10**9 / E]


def test_epoch_width_override():
    led = ledger(tx(1, 0 + 600, addr(2), ME), tx(2, 730, addr(3), ME))
    assert build_profile(led, ME, EpochConfig(epoch_seconds=60)).indegree.tolist() == [1, 0, 1]


# attractiveness

def _attr(events):
    """events: list of (epoch, sender id)."""
    txs = [tx(i + 1, 3600 * e + i, addr(s), ME) for i, (e, s) in enumerate(events)]
    return attractiveness_series(build_profile(ledger(*txs), ME)).tolist()


def test_same_sender_twice():
    assert _attr([(0, 5), (1, 5)]) == [1.0, 0.0]


def test_all_new_senders():
    assert _attr([(0, 5), (1, 6), (2, 7), (2, 8)]) == [1.0, 1.0, 1.0]


def test_half_new():
    assert _attr([(0, 5), (1, 5), (1, 6)]) == [1.0, 0.5]


def test_gap_epoch_is_zero():
    assert _attr([(0, 5), (2, 6)]) == [1.0, 0.0, 1.0]


# bursts

def test_absolute_threshold_counts():
    r = detect_bursts([1, 5, 1, 6, 1], "absolute", 4)
    assert (r.count, r.longest_run, r.first_instance) == (2, 1, 1)
    assert r.event_indices == (1, 3)


def test_constant_series_no_burst():
    r = detect_bursts([0.1] * 7, "sigma", 2.0)
    assert r.count == 0 and r.threshold == 0.1 and r.first_instance is None


def test_longest_run():
    assert detect_bursts([0, 5, 6, 7, 0], "absolute", 4).longest_run == 3


def test_sigma_threshold_value():
    x = [0, 0, 0, 0, 10]
    r = detect_bursts(x, "sigma", 1.0)
    assert r.threshold == pytest.approx(np.mean(x) + np.std(x))
    assert r.event_indices == (4,)


def test_strict_exceedance():
    assert detect_bursts([4, 4, 5], "absolute", 4).count == 1


def test_empty_series():
    with pytest.raises(ValueError):
        detect_bursts([], "sigma", 2.0)


def test_unknown_mode():
    with pytest.raises(ValueError):
        detect_bursts([1.0], "median", 2.0)


floats = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40)


@given(floats)
def test_infinite_thresholds(xs):
    assert detect_bursts(xs, "absolute", -np.inf).count == len(xs)
    assert detect_bursts(xs, "absolute", np.inf).count == 0


@given(floats, st.floats(0, 4))
def test_burst_report_invariants(xs, k):
    r = detect_bursts(xs, "sigma", k)
    assert r.longest_run <= r.count
    assert all(xs[i] > r.threshold for i in r.event_indices)


events = st.lists(st.tuples(st.integers(0, 200_000), st.integers(2, 12), st.booleans(),
                            st.integers(0, 10**20)), min_size=1, max_size=40)


def _build(evs, relabel=lambda s: s):
    txs = []
    for i, (ts, other, incoming, value) in enumerate(evs):
        o = addr(relabel(other))
        txs.append(tx(i + 1, ts + 1, o, ME, value) if incoming else tx(i + 1, ts + 1, ME, o, value))
    return txs


@settings(max_examples=60, deadline=None)
@given(events)
def test_conservation(evs):
    txs = _build(evs)
    p = build_profile(ledger(*txs), ME)
    n_in = sum(1 for e in evs if e[2])
    assert p.indegree.sum() == n_in
    assert p.outdegree.sum() == len(evs) - n_in
    total_in = sum(e[3] for e in evs if e[2]) / E
    assert p.balance_in.sum() == pytest.approx(total_in, rel=1e-9, abs=1e-12)
    assert len(p.inter_event_times) == len(evs) - 1
    assert np.all(p.inter_event_times >= 0)
    assert np.all((p.attractiveness >= 0) & (p.attractiveness <= 1))


@settings(max_examples=60, deadline=None)
@given(events, st.permutations(list(range(2, 13))))
def test_attractiveness_relabel_invariant(evs, perm):
    mapping = dict(zip(range(2, 13), perm))
    a = build_profile(ledger(*_build(evs)), ME).attractiveness
    b = build_profile(ledger(*_build(evs, lambda s: mapping[s])), ME).attractiveness
    assert a.tolist() == b.tolist()
