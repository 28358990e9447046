"""Per-replication accumulators and their order-independent aggregation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

from .radio import ADV_CHANNELS

Z95 = 1.959963984540054
DELAY_BIN_MS = 5


class Outcome(IntEnum):
    RECEIVED = 0
    MISSED_CHANNEL = 1
    MISSED_BUSY = 2
    MISSED_COLLISION = 3
    MISSED_SENSITIVITY = 4
    MISSED_PER = 5


N_OUTCOMES = len(Outcome)


@dataclass
class RunMetrics:
    replication: int
    traced_delivered: bool = False
    delivery_delay_us: int | None = None
    delivered_via: str | None = None
    hop_count: int | None = None
    horizon_truncated: bool = False
    # outcome_counts[channel_index][outcome]
    outcome_counts: list[list[int]] = field(default_factory=lambda: [[0] * N_OUTCOMES for _ in range(3)])
    # (tx_id, rx_id) -> [attempts, received, first arrivals] for the traced message
    links: dict[tuple[int, int], list[int]] = field(default_factory=dict)
    queue_drops: int = 0
    advertising_events: int = 0
    side_sources: int = 0

    @property
    def potential_reception_count(self) -> int:
        return sum(sum(row) for row in self.outcome_counts)

    @property
    def busy_miss_count(self) -> int:
        return sum(row[Outcome.MISSED_BUSY] for row in self.outcome_counts)

    def channel_attempts(self, ch: int) -> int:
        return sum(self.outcome_counts[ch])

    def channel_received(self, ch: int) -> int:
        return self.outcome_counts[ch][Outcome.RECEIVED]

    def row(self) -> dict:
        """Flat CSV row."""
        out = {
            "replication": self.replication,
            "delivered": int(self.traced_delivered),
            "delay_ms": "" if self.delivery_delay_us is None else self.delivery_delay_us / 1000.0,
            "delivered_via": self.delivered_via or "",
            "hop_count": "" if self.hop_count is None else self.hop_count,
            "horizon_truncated": int(self.horizon_truncated),
            "potential_receptions": self.potential_reception_count,
            "busy_misses": self.busy_miss_count,
            "queue_drops": self.queue_drops,
            "advertising_events": self.advertising_events,
        }
        for ci, ch in enumerate(ADV_CHANNELS):
            out[f"ch{int(ch)}_attempts"] = self.channel_attempts(ci)
            out[f"ch{int(ch)}_received"] = self.channel_received(ci)
        return out


def record_delivery(metrics: RunMetrics, origin_kind: str, now_us: int, gen_time_us: int, hop_count: int) -> RunMetrics:
    """Record the first successful reception at the traced destination."""
    if metrics.traced_delivered:
        return metrics
    metrics.traced_delivered = True
    metrics.delivery_delay_us = now_us - gen_time_us
    metrics.delivered_via = origin_kind
    metrics.hop_count = hop_count
    return metrics


def congestion_probability(metrics) -> float | None:
    """Busy misses over potential receptions; None when nothing was sent."""
    potential = metrics.potential_reception_count
    if potential == 0:
        return None
    return metrics.busy_miss_count / potential


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials == 0:
        return (0.0, 1.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, min(p, center - half))
    hi = 1.0 if successes == trials else min(1.0, max(p, center + half))
    return (lo, hi)


@dataclass
class RatioAccumulator:
    """Ratio of sums across replications with a replication-clustered CI.

    Keeps sums of a, n, a^2, n^2 and a*n so merging is exact and
    order-independent for integer inputs.
    """

    count: int = 0
    a: int = 0
    n: int = 0
    aa: int = 0
    nn: int = 0
    an: int = 0

    def add(self, a: int, n: int) -> None:
        self.count += 1
        self.a += a
        self.n += n
        self.aa += a * a
        self.nn += n * n
        self.an += a * n

    def merge(self, other: "RatioAccumulator") -> None:
        self.count += other.count
        self.a += other.a
        self.n += other.n
        self.aa += other.aa
        self.nn += other.nn
        self.an += other.an

    @property
    def ratio(self) -> float | None:
        return None if self.n == 0 else self.a / self.n

    def interval(self, z: float = Z95) -> tuple[float, float] | None:
        if self.n == 0:
            return None
        p = self.a / self.n
        if self.count < 2:
            return (p, p)
        resid = self.aa - 2 * p * self.an + p * p * self.nn
        var = max(resid, 0.0) / (self.n * self.n) * self.count / (self.count - 1)
        half = z * math.sqrt(var)
        return (max(0.0, p - half), min(1.0, p + half))


@dataclass
class AggregateMetrics:
    replications: int = 0
    delivered: int = 0
    truncated: int = 0
    delay_sum_us: int = 0
    delay_sq_sum_us: int = 0
    delay_max_us: int | None = None
    delay_min_us: int | None = None
    delivered_via: dict[str, int] = field(default_factory=dict)
    # hop_count -> [deliveries, delay sum us]
    hops: dict[int, list[int]] = field(default_factory=dict)
    delay_histogram: dict[int, int] = field(default_factory=dict)
    outcome_counts: list[list[int]] = field(default_factory=lambda: [[0] * N_OUTCOMES for _ in range(3)])
    congestion: RatioAccumulator = field(default_factory=RatioAccumulator)
    channel_loss: list[RatioAccumulator] = field(default_factory=lambda: [RatioAccumulator() for _ in range(3)])
    links: dict[tuple[int, int], list[int]] = field(default_factory=dict)
    queue_drops: int = 0
    advertising_events: int = 0

    def add(self, run: RunMetrics) -> None:
        self.replications += 1
        self.truncated += int(run.horizon_truncated)
        if run.traced_delivered:
            d = run.delivery_delay_us
            self.delivered += 1
            self.delay_sum_us += d
            self.delay_sq_sum_us += d * d
            self.delay_max_us = d if self.delay_max_us is None else max(self.delay_max_us, d)
            self.delay_min_us = d if self.delay_min_us is None else min(self.delay_min_us, d)
            self.delivered_via[run.delivered_via] = self.delivered_via.get(run.delivered_via, 0) + 1
            h = self.hops.setdefault(run.hop_count, [0, 0])
            h[0] += 1
            h[1] += d
            b = d // (DELAY_BIN_MS * 1000)
            self.delay_histogram[b] = self.delay_histogram.get(b, 0) + 1
        for ci in range(3):
            row = run.outcome_counts[ci]
            agg = self.outcome_counts[ci]
            for k in range(N_OUTCOMES):
                agg[k] += row[k]
            attempts = sum(row)
            self.channel_loss[ci].add(attempts - row[Outcome.RECEIVED], attempts)
        self.congestion.add(run.busy_miss_count, run.potential_reception_count)
        for key, vals in run.links.items():
            acc = self.links.get(key)
            if acc is None:
                self.links[key] = list(vals)
            else:
                for k in range(3):
                    acc[k] += vals[k]
        self.queue_drops += run.queue_drops
        self.advertising_events += run.advertising_events

    def merge(self, other: "AggregateMetrics") -> None:
        self.replications += other.replications
        self.delivered += other.delivered
        self.truncated += other.truncated
        self.delay_sum_us += other.delay_sum_us
        self.delay_sq_sum_us += other.delay_sq_sum_us
        for name in ("delay_max_us", "delay_min_us"):
            mine, theirs = getattr(self, name), getattr(other, name)
            pick = max if name == "delay_max_us" else min
            setattr(self, name, theirs if mine is None else mine if theirs is None else pick(mine, theirs))
        for k, v in other.delivered_via.items():
            self.delivered_via[k] = self.delivered_via.get(k, 0) + v
        for k, (n, s) in other.hops.items():
            h = self.hops.setdefault(k, [0, 0])
            h[0] += n
            h[1] += s
        for k, v in other.delay_histogram.items():
            self.delay_histogram[k] = self.delay_histogram.get(k, 0) + v
        for ci in range(3):
            for k in range(N_OUTCOMES):
                self.outcome_counts[ci][k] += other.outcome_counts[ci][k]
            self.channel_loss[ci].merge(other.channel_loss[ci])
        self.congestion.merge(other.congestion)
        for key, vals in other.links.items():
            acc = self.links.setdefault(key, [0, 0, 0])
            for k in range(3):
                acc[k] += vals[k]
        self.queue_drops += other.queue_drops
        self.advertising_events += other.advertising_events

    # -- derived quantities ------------------------------------------------

    @property
    def loss_rate(self) -> float:
        return 1.0 - self.delivered / self.replications if self.replications else float("nan")

    @property
    def delivered_rate(self) -> float:
        return self.delivered / self.replications if self.replications else float("nan")

    def loss_interval(self) -> tuple[float, float]:
        lo, hi = wilson_interval(self.delivered, self.replications)
        return (1.0 - hi, 1.0 - lo)

    @property
    def avg_delay_ms(self) -> float | None:
        return self.delay_sum_us / self.delivered / 1000.0 if self.delivered else None

    def avg_delay_interval(self) -> tuple[float, float] | None:
        if self.delivered < 2:
            return None
        n = self.delivered
        mean = self.delay_sum_us / n
        var = max(self.delay_sq_sum_us - n * mean * mean, 0.0) / (n - 1)
        half = Z95 * math.sqrt(var / n)
        return ((mean - half) / 1000.0, (mean + half) / 1000.0)

    @property
    def max_delay_ms(self) -> float | None:
        return None if self.delay_max_us is None else self.delay_max_us / 1000.0

    def avg_delay_for_hops(self, min_hops: int) -> float | None:
        n = sum(v[0] for h, v in self.hops.items() if h >= min_hops)
        s = sum(v[1] for h, v in self.hops.items() if h >= min_hops)
        return s / n / 1000.0 if n else None

    @property
    def potential_reception_count(self) -> int:
        return sum(sum(row) for row in self.outcome_counts)

    @property
    def busy_miss_count(self) -> int:
        return sum(row[Outcome.MISSED_BUSY] for row in self.outcome_counts)

    @property
    def congestion_probability(self) -> float | None:
        return congestion_probability(self)

    def per_channel_loss(self) -> dict[int, float | None]:
        return {int(ch): self.channel_loss[ci].ratio for ci, ch in enumerate(ADV_CHANNELS)}

    def per_channel_error_rate(self) -> dict[int, float | None]:
        """Loss among receptions the scanner was positioned to make.

        Excludes busy and wrong-channel misses, leaving collision,
        sensitivity and PER losses.
        """
        out = {}
        for ci, ch in enumerate(ADV_CHANNELS):
            row = self.outcome_counts[ci]
            eligible = sum(row) - row[Outcome.MISSED_BUSY] - row[Outcome.MISSED_CHANNEL]
            errors = row[Outcome.MISSED_COLLISION] + row[Outcome.MISSED_SENSITIVITY] + row[Outcome.MISSED_PER]
            out[int(ch)] = errors / eligible if eligible else None
        return out

    def summary(self) -> dict:
        lo, hi = self.loss_interval()
        return {
            "replications": self.replications,
            "delivered": self.delivered,
            "loss_rate": self.loss_rate,
            "loss_rate_ci95": [lo, hi],
            "horizon_truncated": self.truncated,
            "avg_delay_ms": self.avg_delay_ms,
            "avg_delay_ci95_ms": self.avg_delay_interval(),
            "max_delay_ms": self.max_delay_ms,
            "min_delay_ms": None if self.delay_min_us is None else self.delay_min_us / 1000.0,
            "delivered_via": dict(sorted(self.delivered_via.items())),
            "delay_by_hops": {
                str(h): {"deliveries": n, "avg_delay_ms": s / n / 1000.0} for h, (n, s) in sorted(self.hops.items())
            },
            "delay_histogram_ms": {
                f"{b * DELAY_BIN_MS}-{(b + 1) * DELAY_BIN_MS}": c for b, c in sorted(self.delay_histogram.items())
            },
            "congestion_probability": self.congestion_probability,
            "congestion_probability_ci95": self.congestion.interval(),
            "potential_receptions": self.potential_reception_count,
            "busy_misses": self.busy_miss_count,
            "outcomes": {
                o.name.lower(): sum(self.outcome_counts[ci][o] for ci in range(3)) for o in Outcome
            },
            "per_channel_loss": {str(k): v for k, v in self.per_channel_loss().items()},
            "per_channel_loss_ci95": {
                str(int(ch)): self.channel_loss[ci].interval() for ci, ch in enumerate(ADV_CHANNELS)
            },
            "per_channel_error_rate": {str(k): v for k, v in self.per_channel_error_rate().items()},
            "queue_drops": self.queue_drops,
            "advertising_events": self.advertising_events,
        }


def link_traffic_map(aggregate: AggregateMetrics, positions: dict[int, tuple[float, float]]) -> list[dict]:
    """Per directed link: mean first-arrival deliveries of the traced message per replication.

    ``miss_probability`` is the fraction of traced-message transmissions on
    the link that the receiver did not get.
    """
    reps = aggregate.replications or 1
    rows = []
    for (i, j), (attempts, received, first) in sorted(aggregate.links.items()):
        xi, yi = positions[i]
        xj, yj = positions[j]
        rows.append(
            {
                "i": i,
                "j": j,
                "x_i": xi,
                "y_i": yi,
                "x_j": xj,
                "y_j": yj,
                "intensity": first / reps,
                "received_per_replication": received / reps,
                "miss_probability": 1.0 - received / attempts if attempts else None,
            }
        )
    return rows


def write_replications_csv(path: str | Path, runs: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        if not runs:
            return
        writer = csv.DictWriter(fh, fieldnames=list(runs[0]))
        writer.writeheader()
        writer.writerows(runs)


def write_links_csv(path: str | Path, rows: list[dict]) -> None:
    fields = ["i", "j", "x_i", "y_i", "x_j", "y_j", "intensity", "received_per_replication", "miss_probability"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: ("" if r[k] is None else r[k]) for k in fields})


def dump_json(path: str | Path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
