import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btmesh.node import (
    AdvertisingEvent,
    Decision,
    MeshPdu,
    MessageCache,
    NodeConfig,
    NodeState,
    OriginKind,
    ScanSchedule,
    TimingConfig,
    build_advertising_event,
    ms_to_us,
    on_receive,
    scan_channel_at,
    schedule_source_transmissions,
)
from btmesh.radio import ADV_CHANNELS, AdvChannel

AIRTIME_US = 312


def _state(config: NodeConfig, offset_us=0, start=AdvChannel.CH37) -> NodeState:
    return NodeState(config, ScanSchedule.from_timing(config.timing, offset_us, start), MessageCache(config.cache_capacity))


# -- pdu / config ------------------------------------------------------------

def test_pdu_size_limit():
    MeshPdu(1, 0, 5, payload_octets=39)
    with pytest.raises(ValueError):
        MeshPdu(1, 0, 5, payload_octets=40)
    with pytest.raises(ValueError):
        MeshPdu(1, 0, -1)


def test_replica_shares_message_key():
    original = MeshPdu(3, 7, 10)
    replica = MeshPdu(3, 7, 10, origin_kind=OriginKind.REPLICA)
    assert original.key == replica.key == (3, 7)


def test_relayed_copy_decrements_ttl_and_counts_hop():
    pdu = MeshPdu(1, 0, 5).relayed()
    assert (pdu.ttl, pdu.hops) == (4, 1)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"inter_pdu_range_ms": (5.0, 3.0)},
        {"inter_pdu_range_ms": (0.0, 10.5)},
        {"inter_pdu_range_ms": (-1.0, 2.0)},
        {"backoff_range_ms": (-1.0, 20.0)},
        {"scan_interval_ms": 10_241.0},
        {"scan_interval_ms": 100.0, "scan_window_ms": 150.0},
        {"scan_window_ms": 0.0},
        {"replica_count": -1},
    ],
)
def test_timing_validation(kwargs):
    with pytest.raises(ValueError):
        TimingConfig(**kwargs)


def test_timing_defaults_are_continuous_scanning():
    t = TimingConfig()
    assert t.backoff_range_ms == (0.0, 20.0)
    assert t.window_ms == t.scan_interval_ms and t.continuous


@pytest.mark.parametrize("kwargs", [{"cache_capacity": 0}, {"default_ttl": 0}])
def test_node_config_validation(kwargs):
    with pytest.raises(ValueError):
        NodeConfig(0, (0.0, 0.0), **kwargs)


# -- scanning ----------------------------------------------------------------

def test_scan_channel_examples():
    t30 = TimingConfig(scan_interval_ms=30.0)
    assert scan_channel_at(t30, AdvChannel.CH37, 45.0) is AdvChannel.CH38
    assert scan_channel_at(t30, AdvChannel.CH37, 95.0) is AdvChannel.CH37
    windowed = TimingConfig(scan_interval_ms=200.0, scan_window_ms=100.0)
    assert scan_channel_at(windowed, AdvChannel.CH38, 150.0) is None
    assert scan_channel_at(windowed, AdvChannel.CH38, 50.0) is AdvChannel.CH38
    assert scan_channel_at(windowed, AdvChannel.CH38, 250.0) is AdvChannel.CH39


@given(
    interval=st.integers(min_value=1, max_value=10_240),
    t=st.floats(min_value=0.0, max_value=1e6),
    start=st.sampled_from(ADV_CHANNELS),
)
def test_scan_channel_period_is_three_intervals(interval, t, start):
    timing = TimingConfig(scan_interval_ms=float(interval))
    assert scan_channel_at(timing, start, t) is scan_channel_at(timing, start, t + 3 * interval)


@given(
    interval_ms=st.integers(min_value=1, max_value=500),
    window_frac=st.floats(min_value=0.05, max_value=1.0),
    offset_frac=st.floats(min_value=0.0, max_value=0.999),
    t_us=st.integers(min_value=0, max_value=5_000_000),
    start=st.sampled_from(ADV_CHANNELS),
)
def test_schedule_agrees_with_scan_channel_at(interval_ms, window_frac, offset_frac, t_us, start):
    window_ms = max(0.001, round(interval_ms * window_frac, 3))
    timing = TimingConfig(scan_interval_ms=float(interval_ms), scan_window_ms=window_ms)
    offset = int(offset_frac * interval_ms * 1000)
    sched = ScanSchedule.from_timing(timing, offset, start)
    assert sched.channel_at(t_us) is scan_channel_at(timing, start, (t_us - offset) / 1000.0)


def test_covers_requires_whole_packet_in_one_window():
    timing = TimingConfig(scan_interval_ms=10.0)
    sched = ScanSchedule.from_timing(timing, 0, AdvChannel.CH37)
    assert sched.covers(0, 0, 312)
    assert sched.covers(0, 9_688, 10_000)
    assert not sched.covers(0, 9_689, 10_001)  # straddles the switch to 38
    assert not sched.covers(1, 9_689, 10_001)
    assert sched.covers(1, 10_000, 10_312)
    assert not sched.covers(2, 0, 312)


def test_covers_rejects_packet_past_window_end():
    timing = TimingConfig(scan_interval_ms=10.0, scan_window_ms=5.0)
    sched = ScanSchedule.from_timing(timing, 0, AdvChannel.CH38)
    assert sched.covers(1, 4_688, 5_000)
    assert not sched.covers(1, 4_689, 5_001)
    assert not sched.covers(1, 6_000, 6_312)


# -- advertising -------------------------------------------------------------

def test_event_with_fixed_gap_of_5_ms():
    ev = build_advertising_event(TimingConfig(inter_pdu_range_ms=(5, 5)), MeshPdu(0, 0, 5), 0, random.Random(1), AIRTIME_US)
    assert [t.start_us for t in ev.transmissions] == [0, 5_312, 10_624]
    assert ev.end_us == 10_936
    assert [t.channel for t in ev.transmissions] == list(ADV_CHANNELS)


def test_event_back_to_back():
    ev = build_advertising_event(TimingConfig(inter_pdu_range_ms=(0, 0)), MeshPdu(0, 0, 5), 0, random.Random(1), AIRTIME_US)
    assert [t.start_us for t in ev.transmissions] == [0, 312, 624]


def test_event_gaps_stay_in_range_over_many_draws():
    rng = random.Random(12345)
    timing = TimingConfig(inter_pdu_range_ms=(3, 5))
    pdu = MeshPdu(0, 0, 5)
    lo = hi = None
    for _ in range(100_000):
        ev = build_advertising_event(timing, pdu, 0, rng, AIRTIME_US)
        tx = ev.transmissions
        g1 = tx[1].start_us - tx[0].end_us
        g2 = tx[2].start_us - tx[1].end_us
        assert 3_000 <= g1 <= 5_000 and 3_000 <= g2 <= 5_000
        assert (tx[0].channel, tx[1].channel, tx[2].channel) == tuple(ADV_CHANNELS)
        lo = min(g1, g2) if lo is None else min(lo, g1, g2)
        hi = max(g1, g2) if hi is None else max(hi, g1, g2)
    # the whole range is reachable
    assert lo < 3_010 and hi > 4_990


@given(
    lo=st.floats(min_value=0.0, max_value=10.0),
    width=st.floats(min_value=0.0, max_value=10.0),
    start=st.integers(min_value=0, max_value=10**9),
    seed=st.integers(min_value=0, max_value=2**32),
)
def test_event_span_bound(lo, width, start, seed):
    hi = min(10.0, lo + width)
    timing = TimingConfig(inter_pdu_range_ms=(lo, hi))
    ev = build_advertising_event(timing, MeshPdu(0, 0, 5), start, random.Random(seed), AIRTIME_US)
    assert ev.start_us == start
    assert ev.end_us - start <= 2 * (ms_to_us(hi) + AIRTIME_US) + AIRTIME_US
    assert all(t.end_us - t.start_us == AIRTIME_US for t in ev.transmissions)


@pytest.mark.parametrize(
    "replicas, gap, gen, expected",
    [(0, 30.0, 100_000, [100_000]), (1, 30.0, 0, [0, 30_000]), (2, 30.0, 0, [0, 30_000, 60_000])],
)
def test_source_schedule(replicas, gap, gen, expected):
    cfg = NodeConfig(0, (0, 0), timing=TimingConfig(replica_count=replicas, replica_gap_ms=gap))
    assert schedule_source_transmissions(cfg, MeshPdu(0, 0, 5), gen) == expected


# -- relay decision ----------------------------------------------------------

def test_second_arrival_is_discarded_by_cache():
    cfg = NodeConfig(1, (0, 0))
    st_ = _state(cfg)
    first = on_receive(st_, cfg, MeshPdu(0, 0, 5), 0, random.Random(0))
    second = on_receive(st_, cfg, MeshPdu(0, 0, 5, origin_kind=OriginKind.REPLICA), 10, random.Random(0))
    assert first.kind is Decision.ACCEPT_AND_RELAY
    assert second.kind is Decision.DISCARD_CACHED


def test_ttl_one_is_accepted_not_relayed():
    cfg = NodeConfig(1, (0, 0))
    d = on_receive(_state(cfg), cfg, MeshPdu(0, 0, 1), 0, random.Random(0))
    assert d.kind is Decision.ACCEPT and d.relay_pdu is None


def test_ttl_zero_is_discarded():
    cfg = NodeConfig(1, (0, 0))
    d = on_receive(_state(cfg), cfg, MeshPdu(0, 0, 0), 0, random.Random(0))
    assert d.kind is Decision.DISCARD_TTL


def test_non_relay_only_accepts():
    cfg = NodeConfig(1, (0, 0), is_relay=False)
    d = on_receive(_state(cfg), cfg, MeshPdu(0, 0, 5), 0, random.Random(0))
    assert d.kind is Decision.ACCEPT


def test_deliver_flag_only_at_destination():
    dest = NodeConfig(7, (0, 0))
    other = NodeConfig(8, (0, 0))
    pdu = MeshPdu(0, 0, 5, destination_id=7)
    assert on_receive(_state(dest), dest, pdu, 0, random.Random(0)).deliver
    assert not on_receive(_state(other), other, pdu, 0, random.Random(0)).deliver


@settings(max_examples=200)
@given(seed=st.integers(min_value=0, max_value=2**32), now=st.integers(min_value=0, max_value=10**9))
def test_relay_decrements_ttl_and_backs_off_within_range(seed, now):
    cfg = NodeConfig(1, (0, 0))
    d = on_receive(_state(cfg), cfg, MeshPdu(0, 0, 5), now, random.Random(seed))
    assert d.kind is Decision.ACCEPT_AND_RELAY
    assert d.relay_pdu.ttl == 4
    assert 0 <= d.backoff_until_us - now <= 20_000


@settings(max_examples=100)
@given(
    arrivals=st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=200),
    capacity=st.integers(min_value=1, max_value=4),
)
def test_no_message_relayed_twice_even_after_eviction(arrivals, capacity):
    cfg = NodeConfig(9, (0, 0), cache_capacity=capacity)
    st_ = _state(cfg)
    rng = random.Random(0)
    relayed = []
    for src, seq in arrivals:
        d = on_receive(st_, cfg, MeshPdu(src, seq, 5), 0, rng)
        if d.kind is Decision.ACCEPT_AND_RELAY:
            relayed.append((src, seq))
        assert len(st_.cache) <= capacity
    assert len(relayed) == len(set(relayed))


def test_cache_evicts_oldest_first():
    cache = MessageCache(2)
    for key in [(0, 0), (0, 1), (0, 0), (0, 2)]:
        cache.add(key)
    assert (0, 0) not in cache
    assert (0, 1) in cache and (0, 2) in cache


def test_offer_queue_discipline():
    cfg = NodeConfig(1, (0, 0), relay_queue_depth=1)
    st_ = _state(cfg)
    assert st_.offer(MeshPdu(0, 0, 5), 100) == "start"
    assert st_.offer(MeshPdu(0, 1, 5), 100) == "queued"
    assert st_.offer(MeshPdu(0, 2, 5), 100) == "dropped"
    assert st_.finish_advertising().sequence == 1
    assert st_.current is None


def test_busy_window_covers_whole_event():
    cfg = NodeConfig(1, (0, 0))
    st_ = _state(cfg)
    ev = build_advertising_event(TimingConfig(inter_pdu_range_ms=(5, 5)), MeshPdu(1, 0, 5), 1_000, random.Random(0), AIRTIME_US)
    st_.begin_advertising(ev)
    assert st_.is_advertising_during(1_000 + 5_400, 1_000 + 5_712)  # inside the gap
    assert not st_.is_advertising_during(12_000, 12_312)
    assert isinstance(ev, AdvertisingEvent)
