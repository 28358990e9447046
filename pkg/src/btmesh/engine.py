"""Discrete-event engine: scheduling, reception arbitration, replications.

Time is integer microseconds. Scanner schedules are periodic functions of
time, so channel occupancy is evaluated analytically at the end of each
packet instead of by scan-boundary events. Transmissions are registered on
their channel when the advertising event is built (all three instants are
known then), which lets every reception be resolved at its packet's end.
"""

from __future__ import annotations

import heapq
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .interference import InterferenceMap
from .metrics import AggregateMetrics, Outcome, RunMetrics, record_delivery
from .node import (
    MeshPdu,
    MessageCache,
    NodeState,
    OriginKind,
    ScanSchedule,
    build_advertising_event,
    ms_to_us,
    on_receive,
    schedule_source_transmissions,
    uniform_us,
    Decision,
)
from .radio import (
    ADV_CHANNELS,
    PerKind,
    airtime_us,
    dbm_to_mw,
    packet_error_rate,
    reference_gain_db,
)
from .scenario import Scenario

RECEIVED = Outcome.RECEIVED
MISSED_CHANNEL = Outcome.MISSED_CHANNEL
MISSED_BUSY = Outcome.MISSED_BUSY
MISSED_COLLISION = Outcome.MISSED_COLLISION
MISSED_SENSITIVITY = Outcome.MISSED_SENSITIVITY
MISSED_PER = Outcome.MISSED_PER


class EventKind(IntEnum):
    """Event kinds; the value is the tie-break priority at equal timestamps."""

    TX_END = 0
    SCAN_BOUNDARY = 1
    BACKOFF_EXPIRY = 2
    TX_START = 3
    PDU_GENERATION = 4
    MEASUREMENT_END = 5


@dataclass(frozen=True)
class ReplicationPlan:
    seed: int = 0
    replications: int = 10_000
    warmup_ms: float = 0.0
    horizon_ms: float = 10_000.0

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.horizon_ms <= self.warmup_ms:
            raise ValueError("horizon must exceed warmup")


def derive_seed(seed: int, index: int) -> int:
    """Independent 64-bit substream seed for ``(seed, index)``."""
    state = np.random.SeedSequence([seed & (2**64 - 1), index]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Small counter-based generator used for per-node random streams.

    Creating one costs a single integer, so every node can own independent
    transmit and receive streams. Draws a node makes therefore do not shift
    when unrelated parts of the network behave differently, which couples
    paired comparisons (common random numbers).
    """

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next64(self) -> int:
        self._state = s = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = ((s ^ (s >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        return (self.next64() >> 11) * (1.0 / 9007199254740992.0)

    def randint(self, a: int, b: int) -> int:
        return a + ((self.next64() * (b - a + 1)) >> 64)


@dataclass(slots=True)
class InFlightTx:
    transmitter: int  # node index
    channel: int  # index into ADV_CHANNELS
    start: int
    end: int
    pdu: MeshPdu
    tx_index: int


class CompiledScenario:
    """Replication-invariant precomputation for one scenario."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.configs = scenario.node_configs()
        self.ids = [c.id for c in self.configs]
        self.index = {nid: i for i, nid in enumerate(self.ids)}
        self.positions = [c.position for c in self.configs]
        n = len(self.configs)
        self.n = n
        radio = scenario.radio
        self.airtime = airtime_us(radio.pdu_bits, radio.bit_rate)
        self.sinr_mode = scenario.per_mode.uses_sinr
        self.fixed_per = 0.0 if self.sinr_mode else scenario.per_mode.per
        self.source = self.index[scenario.traffic.traced_source]
        dest = scenario.traffic.traced_destination
        self.destination = -1 if dest is None else self.index[dest]

        dist = [[math.dist(self.positions[i], self.positions[j]) for j in range(n)] for i in range(n)]
        self.dist = dist
        if self.sinr_mode:
            self.candidates = [[j for j in range(n) if j != i] for i in range(n)]
        else:
            rng_m = scenario.topology.radio_range_m
            self.candidates = [[j for j in range(n) if j != i and dist[i][j] <= rng_m] for i in range(n)]
        self.audible = [set(c) for c in self.candidates]

        # mean received power (no shadowing), dBm, per channel index
        self.mean_rx_dbm = None
        self.wlan_mw = None
        if self.sinr_mode:
            d0 = radio.reference_distance_m
            self.mean_rx_dbm = []
            for ch in ADV_CHANNELS:
                g = radio.tx_power_dbm + reference_gain_db(radio, ch)
                self.mean_rx_dbm.append(
                    [
                        [
                            g - 10.0 * radio.path_loss_exponent * math.log10(max(dist[i][j], d0) / d0)
                            if i != j
                            else 0.0
                            for j in range(n)
                        ]
                        for i in range(n)
                    ]
                )
            imap: InterferenceMap | None = scenario.interference
            w = scenario.interference_window
            if imap is not None:
                self.wlan_mw = [[imap.query_window(w, ch, p) for p in self.positions] for ch in ADV_CHANNELS]
                self.duty = imap.duty_cycle[w]
            else:
                self.wlan_mw = [[0.0] * n for _ in ADV_CHANNELS]
                self.duty = 1.0
            self.noise_mw = dbm_to_mw(radio.noise_floor_dbm)


class _Replication:
    """State of one replication; ``run`` executes it to completion."""

    def __init__(self, cs: CompiledScenario, r: int, seed: int, plan: ReplicationPlan):
        self.cs = cs
        self.r = r
        words = np.random.SeedSequence([seed & _MASK64, r]).generate_state(2 * cs.n + 1, dtype=np.uint64).tolist()
        # global stream: scan phases, shadowing, side-traffic selection
        self.rng = rng = random.Random(words[0])
        # per-node streams: back-off and gap draws (tx), reception draws (rx)
        self.tx_rng = [SplitMix64(w) for w in words[1 : cs.n + 1]]
        self.rx_rng = [SplitMix64(w) for w in words[cs.n + 1 :]]
        self.metrics = RunMetrics(replication=r)
        self.horizon = ms_to_us(plan.horizon_ms)
        self.gen_time = ms_to_us(plan.warmup_ms)
        scenario = cs.scenario
        n = cs.n

        self.states: list[NodeState] = []
        for cfg in cs.configs:
            interval = ms_to_us(cfg.timing.scan_interval_ms)
            offset = rng.randrange(interval)
            start = ADV_CHANNELS[rng.randrange(3)]
            sched = ScanSchedule.from_timing(cfg.timing, offset, start)
            self.states.append(NodeState(cfg, sched, MessageCache(cfg.cache_capacity)))

        self.rx_mw = None
        self.rx_dbm = None
        if cs.sinr_mode:
            sigma = scenario.radio.shadowing_sigma_db
            shadow = [[0.0] * n for _ in range(n)]
            for i in range(n):
                for j in range(i + 1, n):
                    shadow[i][j] = shadow[j][i] = rng.gauss(0.0, sigma) if sigma > 0 else 0.0
            self.rx_dbm = [
                [[m[i][j] - shadow[i][j] for j in range(n)] for i in range(n)] for m in cs.mean_rx_dbm
            ]
            self.rx_mw = [[[10.0 ** (v / 10.0) for v in row] for row in m] for m in self.rx_dbm]

        self.heap: list = []
        self.seq = 0
        self.channel_log: list[list[InFlightTx]] = [[], [], []]
        self.traced_key = (scenario.traffic.traced_source, 0)
        self.tx_count = [0] * n

        # traced message
        src_cfg = cs.configs[cs.source]
        traced = MeshPdu(
            source_id=src_cfg.id,
            sequence=0,
            ttl=src_cfg.default_ttl,
            destination_id=scenario.traffic.traced_destination,
        )
        for k, t in enumerate(schedule_source_transmissions(src_cfg, traced, self.gen_time)):
            pdu = traced if k == 0 else MeshPdu(
                traced.source_id, traced.sequence, traced.ttl, traced.payload_octets,
                OriginKind.REPLICA, traced.destination_id,
            )
            self.push(t, EventKind.PDU_GENERATION, cs.source, pdu)

        # side traffic
        tr = scenario.traffic
        if tr.side_traffic_fraction > 0 and tr.side_traffic_pdus > 0:
            eligible = [i for i in range(n) if i not in (cs.source, cs.destination)]
            count = int(math.floor(tr.side_traffic_fraction * len(eligible) + 0.5))
            chosen = sorted(rng.sample(eligible, count))
            window = ms_to_us(scenario.side_traffic_window_ms)
            self.metrics.side_sources = len(chosen)
            for i in chosen:
                cfg = cs.configs[i]
                for seq in range(tr.side_traffic_pdus):
                    t = self.gen_time + rng.randint(0, window)
                    pdu = MeshPdu(cfg.id, seq, cfg.default_ttl, origin_kind=OriginKind.SIDE_TRAFFIC)
                    self.push(t, EventKind.PDU_GENERATION, i, pdu)

        self.push(self.horizon, EventKind.MEASUREMENT_END, -1, None)

    def push(self, t: int, kind: EventKind, node: int, payload) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (t, int(kind), node, self.seq, payload))

    # -- event handlers --------------------------------------------------

    def _offer(self, i: int, pdu: MeshPdu, ready_at: int, now: int) -> None:
        status = self.states[i].offer(pdu, ready_at)
        if status == "start":
            self.push(ready_at, EventKind.BACKOFF_EXPIRY, i, None)
        elif status == "dropped":
            self.metrics.queue_drops += 1

    def _generate(self, now: int, i: int, pdu: MeshPdu) -> None:
        st = self.states[i]
        st.cache.add(pdu.key)
        st.relayed.add(pdu.key)
        backoff = uniform_us(self.tx_rng[i], st.config.timing.backoff_range_ms)
        self._offer(i, pdu, now + backoff, now)

    def _backoff_expiry(self, now: int, i: int) -> None:
        st = self.states[i]
        event = build_advertising_event(st.config.timing, st.current, now, self.tx_rng[i], self.cs.airtime)
        st.begin_advertising(event)
        self.metrics.advertising_events += 1
        for k, tx in enumerate(event.transmissions):
            rec = InFlightTx(i, k, tx.start_us, tx.end_us, event.pdu, k)
            self.channel_log[k].append(rec)
            self.push(tx.end_us, EventKind.TX_END, i, rec)

    def _tx_end(self, now: int, tx: InFlightTx) -> None:
        cs = self.cs
        i = tx.transmitter
        ch = tx.channel
        s, e = tx.start, tx.end
        log = self.channel_log[ch]
        # prune transmissions that can no longer overlap anything unresolved
        cutoff = now - cs.airtime
        if log and log[0].end <= cutoff:
            log[:] = [t for t in log if t.end > cutoff]
        others = [t for t in log if t is not tx and t.start < e and s < t.end]

        pdu = tx.pdu
        traced = (pdu.source_id, pdu.sequence) == self.traced_key
        counts = self.metrics.outcome_counts[ch]
        states = self.states
        tx_rng, rx_rng = self.tx_rng, self.rx_rng
        self.tx_count[i] += 1
        src_id = cs.ids[i]
        links = self.metrics.links
        sinr_mode = cs.sinr_mode
        per = cs.fixed_per

        for j in cs.candidates[i]:
            sj = states[j]
            if (sj.adv_start_us < e and s < sj.adv_end_us) or s < sj.prev_adv_end_us:
                outcome = MISSED_BUSY
            elif not sj.scan.covers(ch, s, e):
                outcome = MISSED_CHANNEL
            elif sinr_mode:
                outcome = self._sinr_outcome(tx, j, others)
            elif others and any(t.transmitter in cs.audible[j] for t in others):
                outcome = MISSED_COLLISION
            elif per > 0.0 and rx_rng[j].random() < per:
                outcome = MISSED_PER
            else:
                outcome = RECEIVED
            counts[outcome] += 1
            if traced:
                key = (src_id, cs.ids[j])
                link = links.get(key)
                if link is None:
                    link = links[key] = [0, 0, 0]
                link[0] += 1
                if outcome == RECEIVED:
                    link[1] += 1
            if outcome == RECEIVED:
                decision = on_receive(sj, sj.config, pdu, e, tx_rng[j])
                kind = decision.kind
                if kind is Decision.DISCARD_CACHED or kind is Decision.DISCARD_TTL:
                    continue
                if traced:
                    link[2] += 1
                if decision.deliver and traced:
                    record_delivery(self.metrics, pdu.origin_kind.value, e, self.gen_time, pdu.hops + 1)
                if kind is Decision.ACCEPT_AND_RELAY:
                    self._offer(j, decision.relay_pdu, decision.backoff_until_us, e)

        if tx.tx_index == 2:
            st = states[i]
            nxt = st.finish_advertising()
            if nxt is not None:
                backoff = uniform_us(tx_rng[i], st.config.timing.backoff_range_ms)
                self._offer(i, nxt, now + backoff, now)

    def _sinr_outcome(self, tx: InFlightTx, j: int, others: list[InFlightTx]) -> Outcome:
        cs = self.cs
        ch = tx.channel
        i = tx.transmitter
        if self.rx_dbm[ch][i][j] < self.cs.scenario.radio.sensitivity_dbm:
            return MISSED_SENSITIVITY
        i_w = cs.wlan_mw[ch][j]
        rx = self.rx_rng[j]
        if i_w > 0.0 and cs.duty < 1.0 and rx.random() >= cs.duty:
            i_w = 0.0
        i_bm = 0.0
        if others:
            i_bm = _peak_overlap_power(tx.start, tx.end, [(t.start, t.end, self.rx_mw[ch][t.transmitter][j]) for t in others])
        sinr_value = self.rx_mw[ch][i][j] / (cs.noise_mw + i_w + i_bm)
        per = packet_error_rate(cs.scenario.per_mode, sinr_value, cs.scenario.radio)
        if per > 0.0 and rx.random() < per:
            return MISSED_PER
        return RECEIVED

    def run(self) -> RunMetrics:
        heap = self.heap
        pop = heapq.heappop
        tx_end = EventKind.TX_END
        backoff = EventKind.BACKOFF_EXPIRY
        generation = EventKind.PDU_GENERATION
        while heap:
            t, kind, node, _, payload = pop(heap)
            if kind == tx_end:
                self._tx_end(t, payload)
            elif kind == backoff:
                self._backoff_expiry(t, node)
            elif kind == generation:
                self._generate(t, node, payload)
            else:  # measurement end
                break
        m = self.metrics
        if not m.traced_delivered and heap:
            m.horizon_truncated = True
        return m


def _peak_overlap_power(start: int, end: int, intervals: list[tuple[int, int, float]]) -> float:
    """Largest instantaneous sum of powers of intervals overlapping [start, end]."""
    points = []
    for s, e, p in intervals:
        lo, hi = max(s, start), min(e, end)
        if lo < hi:
            points.append((lo, 1, p))
            points.append((hi, 0, p))
    points.sort()
    level = peak = 0.0
    for _, is_start, p in points:
        if is_start:
            level += p
            peak = max(peak, level)
        else:
            level -= p
    return peak


def run_replication(
    scenario: Scenario | CompiledScenario, r: int, seed: int, plan: ReplicationPlan | None = None
) -> RunMetrics:
    cs = scenario if isinstance(scenario, CompiledScenario) else CompiledScenario(scenario)
    plan = plan or ReplicationPlan(seed=seed, replications=1)
    return _Replication(cs, r, seed, plan).run()


def _run_chunk(args) -> tuple[AggregateMetrics, list[dict]]:
    scenario, plan, lo, hi, keep_rows = args
    cs = CompiledScenario(scenario)
    agg = AggregateMetrics()
    rows = []
    for r in range(lo, hi):
        m = _Replication(cs, r, plan.seed, plan).run()
        agg.add(m)
        if keep_rows:
            rows.append(m.row())
    return agg, rows


@dataclass
class ExperimentResult:
    aggregate: AggregateMetrics
    rows: list[dict]


def run_experiment(
    scenario: Scenario, plan: ReplicationPlan, workers: int = 1, keep_rows: bool = False
) -> ExperimentResult:
    """Run ``plan.replications`` independent replications and aggregate them.

    The aggregate does not depend on ``workers``: replication ``r`` always
    uses substream ``(plan.seed, r)`` and merging is exact integer arithmetic.
    """
    n = plan.replications
    if workers <= 1:
        agg, rows = _run_chunk((scenario, plan, 0, n, keep_rows))
        return ExperimentResult(agg, rows)
    step = -(-n // (workers * 4))
    chunks = [(scenario, plan, lo, min(lo + step, n), keep_rows) for lo in range(0, n, step)]
    total = AggregateMetrics()
    rows: list[dict] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for agg, part in pool.map(_run_chunk, chunks):
            total.merge(agg)
            rows.extend(part)
    return ExperimentResult(total, rows)
