"""External interference maps.

Observations recorded on the IEEE 802.15.4 channel grid (channels 11..26)
are remapped onto BLE channels, corrected for the narrower BLE channel
filter and interpolated in space, giving a per-window, per-channel field
of interference power the engine can query at any position.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .radio import ADV_CHANNELS, AdvChannel, ble_center_frequency_mhz, dbm_to_mw, mw_to_dbm

FORMAT_VERSION = 1
DEFAULT_BANDWIDTH_RATIO_DB = -6.02
IEEE154_CHANNELS = range(11, 27)
RECORD_COLUMNS = ("window_start_s", "window_end_s", "channel_154", "x_m", "y_m", "power_dbm")


class MissingData(LookupError):
    """A (window, channel) cell the map must cover has no observations."""


def ieee154_center_frequency_mhz(channel: int) -> float:
    if channel not in IEEE154_CHANNELS:
        raise ValueError(f"IEEE 802.15.4 channel must be in 11..26, got {channel}")
    return 2405.0 + 5.0 * (channel - 11)


def map_channel(ble_channel: int) -> int:
    """802.15.4 channel whose center is nearest the BLE channel (ties go low)."""
    f = ble_center_frequency_mhz(int(ble_channel))
    return min(IEEE154_CHANNELS, key=lambda ch: (abs(ieee154_center_frequency_mhz(ch) - f), ch))


def adapt_power(p_recorded_dbm: float, bandwidth_ratio_db: float = DEFAULT_BANDWIDTH_RATIO_DB) -> float:
    """Power seen through a BLE filter given power recorded through an 802.15.4 filter."""
    return p_recorded_dbm + bandwidth_ratio_db


@dataclass(frozen=True)
class RawInterferenceRecord:
    window_start_s: float
    window_end_s: float
    channel_154: int
    position: tuple[float, float]
    power_dbm: float  # -inf: nothing detected

    def __post_init__(self) -> None:
        if self.channel_154 not in IEEE154_CHANNELS:
            raise ValueError(f"channel_154 must be in 11..26, got {self.channel_154}")
        if not self.window_end_s > self.window_start_s:
            raise ValueError("record time window must have end > start")


class Interpolation(str, Enum):
    IDW = "idw"
    NEAREST = "nearest"


@dataclass(frozen=True)
class SampledField:
    """Spatial field interpolated from point observations in linear power."""

    positions: tuple[tuple[float, float], ...]
    powers_mw: tuple[float, ...]
    interpolation: Interpolation = Interpolation.IDW
    power_exponent: float = 2.0

    def power_mw(self, x: float, y: float) -> float:
        if not self.positions:
            return 0.0
        d2 = [(px - x) ** 2 + (py - y) ** 2 for px, py in self.positions]
        if self.interpolation is Interpolation.NEAREST:
            best = min(range(len(d2)), key=d2.__getitem__)
            return self.powers_mw[best]
        for i, d in enumerate(d2):
            if d == 0.0:
                return self.powers_mw[i]
        half = self.power_exponent / 2.0
        weights = [d**-half for d in d2]
        return sum(w * p for w, p in zip(weights, self.powers_mw)) / sum(weights)

    def to_dict(self) -> dict:
        return {
            "type": "sampled",
            "interpolation": self.interpolation.value,
            "power_exponent": self.power_exponent,
            "samples": [
                {"x_m": x, "y_m": y, "power_dbm": _dbm_for_json(p)}
                for (x, y), p in zip(self.positions, self.powers_mw)
            ],
        }


@dataclass(frozen=True)
class Hotspot:
    center: tuple[float, float]
    peak_dbm: float
    decay_db_per_m: float
    channel_154: int | None = None  # None: present on every channel

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "peak_dbm": self.peak_dbm,
            "decay_db_per_m": self.decay_db_per_m,
            "channel_154": self.channel_154,
        }


@dataclass(frozen=True)
class HotspotField:
    """Analytic field: each hotspot decays linearly in dB with distance."""

    hotspots: tuple[Hotspot, ...]

    def power_mw(self, x: float, y: float) -> float:
        total = 0.0
        for h in self.hotspots:
            d = math.hypot(x - h.center[0], y - h.center[1])
            total += dbm_to_mw(h.peak_dbm - h.decay_db_per_m * d)
        return total

    def to_dict(self) -> dict:
        return {"type": "hotspots", "hotspots": [h.to_dict() for h in self.hotspots]}


@dataclass(frozen=True)
class InterferenceMap:
    windows: tuple[tuple[float, float], ...]
    # fields[w][channel] for every window w and advertising channel
    fields: tuple[dict, ...]
    bandwidth_ratio_db: float = DEFAULT_BANDWIDTH_RATIO_DB
    duty_cycle: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if len(self.fields) != len(self.windows):
            raise ValueError("one field set per window is required")
        for w, per_channel in enumerate(self.fields):
            missing = [int(c) for c in ADV_CHANNELS if c not in per_channel]
            if missing:
                raise ValueError(f"window {w} lacks fields for channels {missing}")
        if not self.duty_cycle:
            object.__setattr__(self, "duty_cycle", (1.0,) * len(self.windows))
        if len(self.duty_cycle) != len(self.windows) or not all(0.0 <= d <= 1.0 for d in self.duty_cycle):
            raise ValueError("duty_cycle needs one value in [0, 1] per window")

    def window_index(self, t_s: float) -> int:
        for i, (start, end) in enumerate(self.windows):
            if start <= t_s < end:
                return i
        raise ValueError(f"time {t_s} s is outside every map window")

    def query_window(self, window: int, channel: int, position: tuple[float, float]) -> float:
        return self.fields[window][AdvChannel(int(channel))].power_mw(*position)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "bandwidth_ratio_db": self.bandwidth_ratio_db,
            "windows": [list(w) for w in self.windows],
            "duty_cycle": list(self.duty_cycle),
            "fields": [
                {str(int(ch)): f.to_dict() for ch, f in sorted(per_channel.items())}
                for per_channel in self.fields
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InterferenceMap":
        version = data.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported interference map format_version {version!r}")
        fields = []
        for per_channel in data["fields"]:
            fields.append({AdvChannel(int(ch)): _field_from_dict(f) for ch, f in per_channel.items()})
        return cls(
            windows=tuple((float(a), float(b)) for a, b in data["windows"]),
            fields=tuple(fields),
            bandwidth_ratio_db=float(data.get("bandwidth_ratio_db", DEFAULT_BANDWIDTH_RATIO_DB)),
            duty_cycle=tuple(float(d) for d in data.get("duty_cycle", ())),
        )


def query(imap: InterferenceMap, t_s: float, channel: int, position: tuple[float, float]) -> float:
    """Interference power in mW at ``position`` on ``channel`` during time ``t_s``."""
    return imap.query_window(imap.window_index(t_s), channel, position)


def _dbm_for_json(mw: float) -> float | None:
    dbm = mw_to_dbm(mw)
    return None if dbm == -math.inf else dbm


def _field_from_dict(data: dict):
    kind = data.get("type")
    if kind == "sampled":
        samples = data["samples"]
        return SampledField(
            positions=tuple((float(s["x_m"]), float(s["y_m"])) for s in samples),
            powers_mw=tuple(0.0 if s["power_dbm"] is None else dbm_to_mw(float(s["power_dbm"])) for s in samples),
            interpolation=Interpolation(data.get("interpolation", "idw")),
            power_exponent=float(data.get("power_exponent", 2.0)),
        )
    if kind == "hotspots":
        return HotspotField(tuple(_hotspot_from_dict(h) for h in data["hotspots"]))
    raise ValueError(f"unknown field type {kind!r}")


def _hotspot_from_dict(data: dict) -> Hotspot:
    return Hotspot(
        center=(float(data["center"][0]), float(data["center"][1])),
        peak_dbm=float(data["peak_dbm"]),
        decay_db_per_m=float(data["decay_db_per_m"]),
        channel_154=None if data.get("channel_154") is None else int(data["channel_154"]),
    )


def build_map(
    records: Iterable[RawInterferenceRecord],
    windows: Sequence[tuple[float, float]],
    interpolation: Interpolation = Interpolation.IDW,
    power_exponent: float = 2.0,
    bandwidth_ratio_db: float = DEFAULT_BANDWIDTH_RATIO_DB,
    channels: Sequence[AdvChannel] = ADV_CHANNELS,
    duty_cycle: Sequence[float] = (),
) -> InterferenceMap:
    """Interpolated interference map from raw observations.

    A record belongs to the window containing the midpoint of its own time
    span. Repeated observations from the same position in one window are
    averaged in linear power before interpolation.
    """
    windows = tuple((float(a), float(b)) for a, b in windows)
    # (window, channel_154) -> position -> list of adapted mW
    grouped: dict[tuple[int, int], dict[tuple[float, float], list[float]]] = {}
    for rec in records:
        mid = 0.5 * (rec.window_start_s + rec.window_end_s)
        w = next((i for i, (a, b) in enumerate(windows) if a <= mid < b), None)
        if w is None:
            continue
        mw = dbm_to_mw(adapt_power(rec.power_dbm, bandwidth_ratio_db))
        grouped.setdefault((w, rec.channel_154), {}).setdefault(rec.position, []).append(mw)

    fields = []
    for w in range(len(windows)):
        per_channel = {}
        for ch in ADV_CHANNELS:
            cell = grouped.get((w, map_channel(ch)))
            if not cell:
                if ch in channels:
                    raise MissingData(
                        f"no observations for window {w} {windows[w]} on 802.15.4 channel "
                        f"{map_channel(ch)} (BLE channel {int(ch)})"
                    )
                per_channel[ch] = SampledField((), ())
                continue
            positions = tuple(sorted(cell))
            powers = tuple(sum(cell[p]) / len(cell[p]) for p in positions)
            per_channel[ch] = SampledField(positions, powers, interpolation, power_exponent)
        fields.append(per_channel)
    return InterferenceMap(windows, tuple(fields), bandwidth_ratio_db, tuple(duty_cycle))


def generate_synthetic_map(
    hotspots: Sequence[Hotspot],
    windows: Sequence[tuple[float, float]] = ((0.0, 3600.0),),
    window_gain_db: Sequence[float] | None = None,
) -> InterferenceMap:
    """Analytic map for tests and demos.

    A hotspot tagged with an 802.15.4 channel only appears on the BLE
    channels that map onto it. ``window_gain_db`` shifts every peak per
    window, e.g. to mimic busy and quiet hours.
    """
    gains = list(window_gain_db) if window_gain_db is not None else [0.0] * len(windows)
    if len(gains) != len(windows):
        raise ValueError("window_gain_db needs one entry per window")
    fields = []
    for gain in gains:
        per_channel = {}
        for ch in ADV_CHANNELS:
            mapped = map_channel(ch)
            spots = tuple(
                Hotspot(h.center, h.peak_dbm + gain, h.decay_db_per_m, h.channel_154)
                for h in hotspots
                if h.channel_154 is None or h.channel_154 == mapped
            )
            per_channel[ch] = HotspotField(spots)
        fields.append(per_channel)
    return InterferenceMap(tuple((float(a), float(b)) for a, b in windows), tuple(fields), 0.0)


def read_records(path: str | Path) -> list[RawInterferenceRecord]:
    """Parse the delimited raw-record format (header line required)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != RECORD_COLUMNS:
            raise ValueError(f"{path}: header must be {','.join(RECORD_COLUMNS)}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) != len(RECORD_COLUMNS):
                raise ValueError(f"{path}:{lineno}: expected {len(RECORD_COLUMNS)} columns, got {len(row)}")
            try:
                start, end, ch, x, y, p = row
                records.append(
                    RawInterferenceRecord(float(start), float(end), int(ch), (float(x), float(y)), float(p))
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return records


def write_records(path: str | Path, records: Iterable[RawInterferenceRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow([r.window_start_s, r.window_end_s, r.channel_154, r.position[0], r.position[1], r.power_dbm])


def load_map(path: str | Path) -> InterferenceMap:
    with open(path) as fh:
        return InterferenceMap.from_dict(json.load(fh))


def save_map(imap: InterferenceMap, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(imap.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
