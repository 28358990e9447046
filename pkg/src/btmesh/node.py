"""Per-device protocol logic: scanning schedule, advertising events,
managed-flooding relay decisions and the message cache.

Times handed to these functions are integer microseconds; configuration is
kept in milliseconds because that is how the protocol parameters are quoted.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum

from .radio import ADV_CHANNELS, AdvChannel

MAX_PDU_OCTETS = 39
MAX_INTER_PDU_MS = 10.0
MAX_SCAN_INTERVAL_MS = 10_240.0


def ms_to_us(ms: float) -> int:
    return int(round(ms * 1000.0))


class OriginKind(str, Enum):
    ORIGINAL = "original"
    REPLICA = "replica"
    SIDE_TRAFFIC = "side_traffic"


@dataclass(frozen=True, slots=True)
class MeshPdu:
    source_id: int
    sequence: int
    ttl: int
    payload_octets: int = MAX_PDU_OCTETS
    origin_kind: OriginKind = OriginKind.ORIGINAL
    destination_id: int | None = None
    # relays traversed so far; the receiver of this copy is hop ``hops + 1``
    hops: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.payload_octets <= MAX_PDU_OCTETS:
            raise ValueError(f"payload_octets must be in 1..{MAX_PDU_OCTETS}")
        if self.ttl < 0:
            raise ValueError("ttl must be >= 0")

    @property
    def key(self) -> tuple[int, int]:
        return (self.source_id, self.sequence)

    def relayed(self) -> "MeshPdu":
        return replace(self, ttl=self.ttl - 1, hops=self.hops + 1)


@dataclass(frozen=True)
class TimingConfig:
    inter_pdu_range_ms: tuple[float, float] = (3.0, 5.0)
    backoff_range_ms: tuple[float, float] = (0.0, 20.0)
    scan_interval_ms: float = 100.0
    scan_window_ms: float | None = None  # None: equal to scan_interval (continuous)
    replica_count: int = 0
    replica_gap_ms: float = 30.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "inter_pdu_range_ms", tuple(float(v) for v in self.inter_pdu_range_ms))
        object.__setattr__(self, "backoff_range_ms", tuple(float(v) for v in self.backoff_range_ms))
        lo, hi = self.inter_pdu_range_ms
        if not 0.0 <= lo <= hi <= MAX_INTER_PDU_MS:
            raise ValueError(f"inter_pdu_range_ms must satisfy 0 <= min <= max <= 10, got {self.inter_pdu_range_ms}")
        blo, bhi = self.backoff_range_ms
        if not 0.0 <= blo <= bhi:
            raise ValueError(f"backoff_range_ms must satisfy 0 <= min <= max, got {self.backoff_range_ms}")
        if not 0.0 < self.window_ms <= self.scan_interval_ms <= MAX_SCAN_INTERVAL_MS:
            raise ValueError("need 0 < scan_window <= scan_interval <= 10240 ms")
        if self.replica_count < 0:
            raise ValueError("replica_count must be >= 0")
        if self.replica_gap_ms < 0:
            raise ValueError("replica_gap_ms must be >= 0")

    @property
    def window_ms(self) -> float:
        return self.scan_interval_ms if self.scan_window_ms is None else self.scan_window_ms

    @property
    def continuous(self) -> bool:
        return self.window_ms == self.scan_interval_ms

    def replace(self, **changes) -> "TimingConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class NodeConfig:
    id: int
    position: tuple[float, float]
    is_relay: bool = True
    timing: TimingConfig = field(default_factory=TimingConfig)
    cache_capacity: int = 255
    default_ttl: int = 64
    relay_queue_depth: int = 1

    def __post_init__(self) -> None:
        if self.cache_capacity < 1:
            raise ValueError("cache_capacity must be >= 1")
        if self.default_ttl < 1:
            raise ValueError("default_ttl must be >= 1")
        if self.relay_queue_depth < 0:
            raise ValueError("relay_queue_depth must be >= 0")


# -- scanning ---------------------------------------------------------------

def scan_channel_at(config: TimingConfig, start_channel: AdvChannel, t: float) -> AdvChannel | None:
    """Channel a scanner listens on at time ``t`` (ms), or None between windows.

    Scanning event ``k`` starts at ``k * scan_interval`` and listens on the
    ``k``-th cyclic successor of ``start_channel``. Negative ``t`` refers to
    events before the first one, which keeps offset schedules periodic.
    """
    interval = config.scan_interval_ms
    k, into = divmod(t, interval)
    if into >= config.window_ms:
        return None
    return ADV_CHANNELS[(ADV_CHANNELS.index(start_channel) + int(k)) % 3]


@dataclass(frozen=True, slots=True)
class ScanSchedule:
    """A scanner's concrete schedule in integer microseconds."""

    interval_us: int
    window_us: int
    offset_us: int
    start_index: int  # index into ADV_CHANNELS of the channel at ``offset_us``

    @classmethod
    def from_timing(cls, timing: TimingConfig, offset_us: int, start_channel: AdvChannel) -> "ScanSchedule":
        return cls(
            ms_to_us(timing.scan_interval_ms),
            ms_to_us(timing.window_ms),
            offset_us,
            ADV_CHANNELS.index(start_channel),
        )

    def channel_at(self, t_us: int) -> AdvChannel | None:
        k, into = divmod(t_us - self.offset_us, self.interval_us)
        if into >= self.window_us:
            return None
        return ADV_CHANNELS[(self.start_index + k) % 3]

    def covers(self, channel_index: int, start_us: int, end_us: int) -> bool:
        """True if the scanner sits on ``channel_index`` for all of [start, end]."""
        k, into = divmod(start_us - self.offset_us, self.interval_us)
        if (self.start_index + k) % 3 != channel_index:
            return False
        return into + (end_us - start_us) <= self.window_us


# -- advertising ------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Transmission:
    channel: AdvChannel
    start_us: int
    end_us: int


@dataclass(frozen=True, slots=True)
class AdvertisingEvent:
    pdu: MeshPdu
    transmissions: tuple[Transmission, Transmission, Transmission]

    @property
    def start_us(self) -> int:
        return self.transmissions[0].start_us

    @property
    def end_us(self) -> int:
        return self.transmissions[-1].end_us


def uniform_us(rng: random.Random, range_ms: tuple[float, float]) -> int:
    lo, hi = ms_to_us(range_ms[0]), ms_to_us(range_ms[1])
    return lo if lo == hi else rng.randint(lo, hi)


def build_advertising_event(
    config: TimingConfig, pdu: MeshPdu, start_us: int, rng: random.Random, airtime_us: int
) -> AdvertisingEvent:
    """Three back-to-back transmissions on 37, 38, 39 separated by random gaps."""
    t0 = start_us
    t1 = t0 + airtime_us + uniform_us(rng, config.inter_pdu_range_ms)
    t2 = t1 + airtime_us + uniform_us(rng, config.inter_pdu_range_ms)
    return AdvertisingEvent(
        pdu,
        tuple(Transmission(ch, t, t + airtime_us) for ch, t in zip(ADV_CHANNELS, (t0, t1, t2))),
    )


def schedule_source_transmissions(config: NodeConfig, pdu: MeshPdu, gen_time_us: int) -> list[int]:
    """Advertising request instants for a locally originated PDU."""
    gap = ms_to_us(config.timing.replica_gap_ms)
    return [gen_time_us + k * gap for k in range(config.timing.replica_count + 1)]


# -- relay decision ----------------------------------------------------------

class Phase(str, Enum):
    SCANNING = "scanning"
    BACKING_OFF = "backing_off"
    ADVERTISING = "advertising"


class Decision(str, Enum):
    DISCARD_CACHED = "discard_cached"
    DISCARD_TTL = "discard_ttl"
    ACCEPT = "accept"
    ACCEPT_AND_RELAY = "accept_and_relay"


@dataclass(frozen=True, slots=True)
class RelayDecision:
    kind: Decision
    deliver: bool = False
    relay_pdu: MeshPdu | None = None
    backoff_until_us: int | None = None


class MessageCache:
    """Bounded set of (source, sequence) keys with oldest-first eviction."""

    __slots__ = ("capacity", "_keys")

    def __init__(self, capacity: int) -> None:
        self.capacity = capacity
        self._keys: dict[tuple[int, int], None] = {}

    def __contains__(self, key) -> bool:
        return key in self._keys

    def __len__(self) -> int:
        return len(self._keys)

    def add(self, key: tuple[int, int]) -> None:
        if key in self._keys:
            return
        self._keys[key] = None
        if len(self._keys) > self.capacity:
            del self._keys[next(iter(self._keys))]


@dataclass(slots=True)
class NodeState:
    config: NodeConfig
    scan: ScanSchedule
    cache: MessageCache
    relay_queue: deque = field(default_factory=deque)
    phase: Phase = Phase.SCANNING
    current: MeshPdu | None = None
    backoff_until_us: int = 0
    adv_start_us: int = -1
    adv_end_us: int = -1
    prev_adv_end_us: int = -1
    relayed: set = field(default_factory=set)

    @property
    def last_scan_channel(self) -> AdvChannel:
        return ADV_CHANNELS[self.scan.start_index]

    def is_advertising_during(self, start_us: int, end_us: int) -> bool:
        if self.adv_start_us < end_us and start_us < self.adv_end_us:
            return True
        return start_us < self.prev_adv_end_us

    def offer(self, pdu: MeshPdu, ready_at_us: int) -> str:
        """Hand a PDU to the transmit path.

        Returns ``"start"`` when the node was idle and is now backing off
        until ``ready_at_us``, ``"queued"`` when it waits behind the current
        PDU, or ``"dropped"`` when the relay queue is full.
        """
        if self.current is None:
            self.current = pdu
            self.phase = Phase.BACKING_OFF
            self.backoff_until_us = ready_at_us
            return "start"
        if len(self.relay_queue) < self.config.relay_queue_depth:
            self.relay_queue.append(pdu)
            return "queued"
        return "dropped"

    def begin_advertising(self, event: AdvertisingEvent) -> None:
        self.phase = Phase.ADVERTISING
        self.prev_adv_end_us = self.adv_end_us
        self.adv_start_us = event.start_us
        self.adv_end_us = event.end_us

    def finish_advertising(self) -> MeshPdu | None:
        """Return to scanning; hand back the next queued PDU, if any."""
        self.current = None
        self.phase = Phase.SCANNING
        if self.relay_queue:
            return self.relay_queue.popleft()
        return None


def on_receive(
    state: NodeState, config: NodeConfig, pdu: MeshPdu, now_us: int, rng: random.Random
) -> RelayDecision:
    """Managed-flooding decision for a successfully demodulated PDU."""
    key = (pdu.source_id, pdu.sequence)
    if key in state.cache:
        return RelayDecision(Decision.DISCARD_CACHED)
    if pdu.ttl < 1:
        return RelayDecision(Decision.DISCARD_TTL)
    state.cache.add(key)
    deliver = pdu.destination_id == config.id
    if config.is_relay and pdu.ttl > 1 and key not in state.relayed:
        state.relayed.add(key)
        backoff = uniform_us(rng, config.timing.backoff_range_ms)
        return RelayDecision(Decision.ACCEPT_AND_RELAY, deliver, pdu.relayed(), now_us + backoff)
    return RelayDecision(Decision.ACCEPT, deliver)
