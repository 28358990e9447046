"""Topologies, traffic definitions, scenario files and experiment presets."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path

from .interference import Hotspot, InterferenceMap, generate_synthetic_map, load_map, map_channel
from .node import NodeConfig, TimingConfig
from .radio import AdvChannel, PerKind, PerMode, RadioParams


class SchemaError(ValueError):
    """Scenario or topology file does not match the expected layout."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = f"{source or '<scenario>'}:{line}: " if line is not None else f"{source}: " if source else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class Topology:
    nodes: tuple[NodeConfig, ...]
    radio_range_m: float = 9.0
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("node ids must be unique")
        for n in self.nodes:
            if not all(math.isfinite(c) for c in n.position):
                raise ValueError(f"node {n.id} has a non-finite position")

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    def node(self, node_id: int) -> NodeConfig:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def positions(self) -> dict[int, tuple[float, float]]:
        return {n.id: n.position for n in self.nodes}

    def edges(self) -> set[tuple[int, int]]:
        """Undirected connectivity {(i, j): i < j, dist <= radio range}."""
        out = set()
        nodes = self.nodes
        for a in range(len(nodes)):
            for b in range(a + 1, len(nodes)):
                if _dist(nodes[a].position, nodes[b].position) <= self.radio_range_m:
                    i, j = sorted((nodes[a].id, nodes[b].id))
                    out.add((i, j))
        return out


def _dist(p, q) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def generate_grid(
    spacing: float,
    rows: int,
    cols: int,
    radio_range: float = 9.0,
    *,
    row_shift: float = 0.0,
    extra_cells: tuple[tuple[int, int], ...] = (),
    label: str = "",
) -> Topology:
    """Rows x cols lattice at pitch ``spacing``, every node a relay.

    Node ``r * cols + c`` sits at ``(c * spacing, r * spacing)``, so node 0
    and the last node are opposite corners. ``row_shift`` offsets odd rows
    by that fraction of the pitch (a brick pattern); ``extra_cells`` appends
    further (row, col) lattice sites to hit node counts no rectangle gives.
    """
    if spacing <= 0:
        raise ValueError("spacing must be > 0")
    cells = [(r, c) for r in range(rows) for c in range(cols)] + list(extra_cells)
    if len(cells) < 2:
        raise ValueError("a grid needs at least two nodes")
    if len(set(cells)) != len(cells):
        raise ValueError("extra_cells overlap the lattice")
    nodes = []
    for i, (r, c) in enumerate(cells):
        x = (c + (row_shift if r % 2 else 0.0)) * spacing
        nodes.append(NodeConfig(id=i, position=(x, r * spacing)))
    return Topology(tuple(nodes), radio_range, label)


@dataclass(frozen=True)
class TrafficSpec:
    traced_source: int
    # None floods the traced message without measuring delivery anywhere
    traced_destination: int | None
    replica_count: int = 0
    replica_gap_ms: float = 30.0
    side_traffic_fraction: float = 0.0
    # side-traffic PDUs are generated uniformly in [0, window]; None means
    # the traced message's back-off window plus 50 ms
    side_traffic_window_ms: float | None = None
    side_traffic_pdus: int = 1

    def __post_init__(self) -> None:
        if self.traced_source == self.traced_destination:
            raise ValueError("traced source and destination must differ")
        if not 0.0 <= self.side_traffic_fraction <= 1.0:
            raise ValueError("side_traffic_fraction must be in [0, 1]")
        if self.replica_count < 0 or self.side_traffic_pdus < 0:
            raise ValueError("counts must be >= 0")


@dataclass(frozen=True)
class Scenario:
    topology: Topology
    traffic: TrafficSpec
    radio: RadioParams = field(default_factory=RadioParams)
    per_mode: PerMode = field(default_factory=PerMode)
    timing: TimingConfig = field(default_factory=TimingConfig)
    interference: InterferenceMap | None = None
    interference_window: int = 0
    cache_capacity: int = 255
    default_ttl: int = 64
    relay_queue_depth: int = 1

    def __post_init__(self) -> None:
        ids = set(self.topology.ids)
        for role in ("traced_source", "traced_destination"):
            if role == "traced_destination" and self.traffic.traced_destination is None:
                continue
            if getattr(self.traffic, role) not in ids:
                raise ValueError(f"{role} {getattr(self.traffic, role)} is not a topology node")
        if self.interference is not None and not 0 <= self.interference_window < len(self.interference.windows):
            raise ValueError("interference_window does not index a map window")

    @property
    def side_traffic_window_ms(self) -> float:
        if self.traffic.side_traffic_window_ms is not None:
            return self.traffic.side_traffic_window_ms
        return self.timing.backoff_range_ms[1] + 50.0

    def node_configs(self) -> list[NodeConfig]:
        """Per-node configuration with scenario-wide defaults applied.

        Only the traced source inherits the replica settings.
        """
        plain = self.timing.replace(replica_count=0)
        source = self.timing.replace(
            replica_count=self.traffic.replica_count, replica_gap_ms=self.traffic.replica_gap_ms
        )
        out = []
        for n in self.topology.nodes:
            out.append(
                replace(
                    n,
                    timing=source if n.id == self.traffic.traced_source else plain,
                    cache_capacity=self.cache_capacity,
                    default_ttl=self.default_ttl,
                    relay_queue_depth=self.relay_queue_depth,
                )
            )
        return out

    def with_changes(self, **changes) -> "Scenario":
        """Copy with top-level, ``timing.*``, ``traffic.*`` or ``radio.*`` fields replaced."""
        top, groups = {}, {"timing": {}, "traffic": {}, "radio": {}}
        for key, value in changes.items():
            group, _, name = key.partition(".")
            if name:
                if group not in groups:
                    raise KeyError(key)
                groups[group][name] = value
            else:
                top[key] = value
        for group, vals in groups.items():
            if vals:
                top[group] = replace(getattr(self, group), **vals)
        return replace(self, **top)

    # -- serialization ----------------------------------------------------

    def to_dict(self, interference_ref: str | None = None) -> dict:
        r, t, tr = self.radio, self.timing, self.traffic
        data = {
            "label": self.topology.label,
            "radio_range_m": self.topology.radio_range_m,
            "nodes": [
                {"id": n.id, "x_m": n.position[0], "y_m": n.position[1], "relay": n.is_relay}
                for n in self.topology.nodes
            ],
            "radio": {
                "tx_power_dbm": r.tx_power_dbm,
                "noise_floor_dbm": r.noise_floor_dbm,
                "sensitivity_dbm": r.sensitivity_dbm,
                "path_loss_exponent": r.path_loss_exponent,
                "shadowing_sigma_db": r.shadowing_sigma_db,
                "reference_distance_m": r.reference_distance_m,
                "bit_rate": r.bit_rate,
                "pdu_bits": r.pdu_bits,
                "per_alpha": r.per_alpha,
            },
            "timing": {
                "inter_pdu_ms": list(t.inter_pdu_range_ms),
                "backoff_ms": list(t.backoff_range_ms),
                "scan_interval_ms": t.scan_interval_ms,
                "scan_window_ms": t.scan_window_ms,
            },
            "traffic": {
                "source": tr.traced_source,
                "destination": tr.traced_destination,
                "replica_count": tr.replica_count,
                "replica_gap_ms": tr.replica_gap_ms,
                "side_traffic_fraction": tr.side_traffic_fraction,
                "side_traffic_window_ms": tr.side_traffic_window_ms,
                "side_traffic_pdus": tr.side_traffic_pdus,
            },
            "per_mode": {"kind": self.per_mode.kind.value, "per": self.per_mode.per},
            "node_defaults": {
                "cache_capacity": self.cache_capacity,
                "default_ttl": self.default_ttl,
                "relay_queue_depth": self.relay_queue_depth,
            },
            "interference_window": self.interference_window,
        }
        if interference_ref is not None:
            data["interference_map"] = interference_ref
        elif self.interference is not None:
            data["interference_map"] = self.interference.to_dict()
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# -- file loading --------------------------------------------------------

_TOP_KEYS = {
    "label", "radio_range_m", "nodes", "radio", "timing", "traffic", "per_mode",
    "node_defaults", "interference_map", "interference_window", "plan",
}
_NODE_KEYS = {"id", "x_m", "y_m", "relay"}
_RADIO_KEYS = {
    "tx_power_dbm", "noise_floor_dbm", "sensitivity_dbm", "path_loss_exponent", "shadowing_sigma_db",
    "reference_distance_m", "bit_rate", "pdu_bits", "per_alpha",
}
_TIMING_KEYS = {"inter_pdu_ms", "backoff_ms", "scan_interval_ms", "scan_window_ms"}
_TRAFFIC_KEYS = {
    "source", "destination", "replica_count", "replica_gap_ms", "side_traffic_fraction",
    "side_traffic_window_ms", "side_traffic_pdus",
}
_PER_KEYS = {"kind", "per"}
_DEFAULTS_KEYS = {"cache_capacity", "default_ttl", "relay_queue_depth"}
_PLAN_KEYS = {"seed", "replications", "horizon_ms", "warmup_ms"}


class _Locator:
    """Best-effort line numbers for keys and values in the raw JSON text."""

    def __init__(self, text: str, source: str | None):
        self.text = text
        self.source = source

    def line_of(self, pattern: str, occurrence: int = 0) -> int | None:
        matches = list(re.finditer(pattern, self.text))
        if len(matches) <= occurrence:
            return None
        return self.text.count("\n", 0, matches[occurrence].start()) + 1

    def key_line(self, key: str, occurrence: int = 0) -> int | None:
        return self.line_of(r'"' + re.escape(key) + r'"\s*:', occurrence)

    def error(self, message: str, key: str | None = None, occurrence: int = 0, line: int | None = None) -> SchemaError:
        if line is None and key is not None:
            line = self.key_line(key, occurrence)
        return SchemaError(message, line, self.source)


def _check_keys(obj, allowed: set[str], where: str, loc: _Locator) -> None:
    if not isinstance(obj, dict):
        raise loc.error(f"{where} must be an object", where if where != "scenario" else None)
    for key in obj:
        if key not in allowed:
            raise loc.error(f"unknown field {key!r} in {where}", key)


def _number(value, what: str, loc: _Locator, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise loc.error(f"{what} must be a finite number, got {value!r}", key)
    return float(value)


def _parse(text: str, source: str | None) -> tuple[dict, _Locator]:
    loc = _Locator(text, source)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, source) from None
    if not isinstance(data, dict):
        raise SchemaError("top level must be an object", 1, source)
    return data, loc


def _topology_from(data: dict, loc: _Locator) -> Topology:
    nodes = data.get("nodes")
    if not isinstance(nodes, list) or not nodes:
        raise loc.error("nodes must be a non-empty list", "nodes", line=loc.key_line("nodes") or 1)
    seen: dict[int, int] = {}
    parsed = []
    for idx, raw in enumerate(nodes):
        _check_keys(raw, _NODE_KEYS, "node", loc)
        for key in ("id", "x_m", "y_m"):
            if key not in raw:
                raise loc.error(f"node #{idx} lacks {key!r}", "id", occurrence=idx)
        node_id = raw["id"]
        if isinstance(node_id, bool) or not isinstance(node_id, int):
            raise loc.error(f"node id must be an integer, got {node_id!r}", "id", occurrence=idx)
        if node_id in seen:
            line = loc.line_of(r'"id"\s*:\s*' + str(node_id) + r"\b", 1)
            raise loc.error(f"duplicate node id {node_id}", line=line)
        seen[node_id] = idx
        x = _number(raw["x_m"], "x_m", loc, "x_m")
        y = _number(raw["y_m"], "y_m", loc, "y_m")
        relay = raw.get("relay", True)
        if not isinstance(relay, bool):
            raise loc.error(f"relay must be a boolean, got {relay!r}", "relay")
        parsed.append(NodeConfig(id=node_id, position=(x, y), is_relay=relay))
    rng = data.get("radio_range_m", 9.0)
    return Topology(tuple(parsed), _number(rng, "radio_range_m", loc, "radio_range_m"), str(data.get("label", "")))


def load_topology(path: str | Path) -> Topology:
    """Read only the ``nodes`` / ``radio_range_m`` / ``label`` part of a file."""
    text = Path(path).read_text()
    data, loc = _parse(text, str(path))
    _check_keys(data, _TOP_KEYS, "scenario", loc)
    return _topology_from(data, loc)


def scenario_from_dict(data: dict, text: str | None = None, source: str | None = None, base_dir: Path | None = None) -> Scenario:
    loc = _Locator(text if text is not None else json.dumps(data, indent=2), source)
    _check_keys(data, _TOP_KEYS, "scenario", loc)
    topology = _topology_from(data, loc)

    radio_raw = data.get("radio", {})
    _check_keys(radio_raw, _RADIO_KEYS, "radio", loc)
    timing_raw = data.get("timing", {})
    _check_keys(timing_raw, _TIMING_KEYS, "timing", loc)
    if "traffic" not in data:
        raise loc.error("missing 'traffic' section", line=1)
    traffic_raw = data["traffic"]
    _check_keys(traffic_raw, _TRAFFIC_KEYS, "traffic", loc)
    per_raw = data.get("per_mode", {"kind": "fixed", "per": 0.0})
    if isinstance(per_raw, str):
        per_raw = {"kind": per_raw}
    _check_keys(per_raw, _PER_KEYS, "per_mode", loc)
    defaults_raw = data.get("node_defaults", {})
    _check_keys(defaults_raw, _DEFAULTS_KEYS, "node_defaults", loc)
    if "plan" in data:
        _check_keys(data["plan"], _PLAN_KEYS, "plan", loc)

    try:
        radio = RadioParams(**{k: (int(v) if k == "pdu_bits" else float(v)) for k, v in radio_raw.items()})
        timing_kwargs = {}
        if "inter_pdu_ms" in timing_raw:
            timing_kwargs["inter_pdu_range_ms"] = tuple(timing_raw["inter_pdu_ms"])
        if "backoff_ms" in timing_raw:
            timing_kwargs["backoff_range_ms"] = tuple(timing_raw["backoff_ms"])
        if "scan_interval_ms" in timing_raw:
            timing_kwargs["scan_interval_ms"] = float(timing_raw["scan_interval_ms"])
        if timing_raw.get("scan_window_ms") is not None:
            timing_kwargs["scan_window_ms"] = float(timing_raw["scan_window_ms"])
        timing = TimingConfig(**timing_kwargs)
        traffic = TrafficSpec(
            traced_source=int(traffic_raw["source"]),
            traced_destination=None if traffic_raw["destination"] is None else int(traffic_raw["destination"]),
            replica_count=int(traffic_raw.get("replica_count", 0)),
            replica_gap_ms=float(traffic_raw.get("replica_gap_ms", 30.0)),
            side_traffic_fraction=float(traffic_raw.get("side_traffic_fraction", 0.0)),
            side_traffic_window_ms=(
                None if traffic_raw.get("side_traffic_window_ms") is None
                else float(traffic_raw["side_traffic_window_ms"])
            ),
            side_traffic_pdus=int(traffic_raw.get("side_traffic_pdus", 1)),
        )
        per_mode = PerMode(PerKind(per_raw.get("kind", "fixed")), float(per_raw.get("per", 0.0)))
    except KeyError as exc:
        raise loc.error(f"missing field {exc.args[0]!r}", "traffic") from None
    except (TypeError, ValueError) as exc:
        raise loc.error(str(exc), line=None) from None

    imap = None
    ref = data.get("interference_map")
    if isinstance(ref, str):
        path = Path(ref)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        imap = load_map(path)
    elif isinstance(ref, dict):
        try:
            imap = InterferenceMap.from_dict(ref)
        except (KeyError, TypeError, ValueError) as exc:
            raise loc.error(f"bad interference_map: {exc}", "interference_map") from None
    elif ref is not None:
        raise loc.error("interference_map must be a path or an object", "interference_map")

    try:
        return Scenario(
            topology=topology,
            traffic=traffic,
            radio=radio,
            per_mode=per_mode,
            timing=timing,
            interference=imap,
            interference_window=int(data.get("interference_window", 0)),
            cache_capacity=int(defaults_raw.get("cache_capacity", 255)),
            default_ttl=int(defaults_raw.get("default_ttl", 64)),
            relay_queue_depth=int(defaults_raw.get("relay_queue_depth", 1)),
        )
    except ValueError as exc:
        raise loc.error(str(exc), line=None) from None


def load_scenario(path: str | Path) -> tuple[Scenario, dict]:
    """Scenario plus the optional ``plan`` section of the file."""
    path = Path(path)
    text = path.read_text()
    data, _ = _parse(text, str(path))
    scenario = scenario_from_dict(data, text, str(path), path.parent)
    return scenario, dict(data.get("plan", {}))


# -- presets ----------------------------------------------------------------

class Preset(str, Enum):
    REPLICA_STUDY = "replica-study"
    TIMING_MATRIX = "timing-matrix"
    SCALABILITY_A = "scalability-a"
    SCALABILITY_B = "scalability-b"
    SCALABILITY_C = "scalability-c"
    SCALABILITY_D = "scalability-d"
    SIDE_TRAFFIC_SHORT = "side-traffic-short"
    SIDE_TRAFFIC_LONG = "side-traffic-long"
    OFFICE_INTERFERENCE = "office-interference"


# Scalability grids, (spacing m, rows, cols, extra lattice cells).
#
# The deployment keeps a fixed corridor width of 24 m (the 68-node grid at
# 8 m pitch): a topology gets as many rows as fit in that width at its
# pitch, and columns are added until the node count is reached. Leftover
# nodes form a partial column at the far end. At 8.8 m only three rows fit.
GRID_LAYOUTS: dict[str, tuple[float, int, int, tuple[tuple[int, int], ...]]] = {
    "A": (8.8, 3, 17, ((0, 17),)),
    "B": (8.0, 4, 17, ()),
    "C": (7.2, 4, 21, ((0, 21), (1, 21))),
    "D": (6.6, 4, 26, ((0, 26), (1, 26))),
}
GRID_NODE_COUNTS = {"A": 52, "B": 68, "C": 86, "D": 106}

INTER_PDU_RANGES_MS = ((1.0, 2.0), (2.0, 4.0), (4.0, 6.0), (6.0, 8.0), (8.0, 10.0))
SCAN_INTERVALS_MS = tuple(float(v) for v in range(10, 201, 10))
REPLICA_STUDY_PER = (0.0, 0.05, 0.1)
SCALABILITY_PER = (0.0, 0.05, 0.1, 0.15)

OFFICE_WINDOWS_S = ((25200.0, 36000.0), (36000.0, 50400.0), (50400.0, 61200.0), (61200.0, 72000.0))
# relative WLAN load per window: quiet morning, moderate midday, busy afternoon, busy evening
OFFICE_WINDOW_GAIN_DB = (-12.0, -6.0, 0.0, -2.0)
OFFICE_HOTSPOTS = (
    # access point on WLAN channel 1, which overlaps the 802.15.4 channel BLE 37 maps to
    Hotspot((44.0, 2.0), -52.0, 1.5, map_channel(AdvChannel.CH37)),
    # its weaker skirt reaching the channel BLE 38 maps to
    Hotspot((44.0, 2.0), -68.0, 1.5, map_channel(AdvChannel.CH38)),
)


# free parameters each preset accepts (the axes of its cells)
PRESET_OPTIONS: dict[Preset, tuple[str, ...]] = {
    Preset.REPLICA_STUDY: ("replica_count", "per"),
    Preset.TIMING_MATRIX: ("inter_pdu_ms", "scan_interval_ms"),
    Preset.SCALABILITY_A: ("per",),
    Preset.SCALABILITY_B: ("per",),
    Preset.SCALABILITY_C: ("per",),
    Preset.SCALABILITY_D: ("per",),
    Preset.SIDE_TRAFFIC_SHORT: ("topology", "per", "side_traffic_fraction"),
    Preset.SIDE_TRAFFIC_LONG: ("topology", "per", "side_traffic_fraction"),
    Preset.OFFICE_INTERFERENCE: ("interference", "window", "per_kind"),
}


def grid_topology(name: str) -> Topology:
    """Scalability grid ``A``..``D``; node 0 and node rows*cols-1 are opposite corners."""
    key = name.upper()
    if key not in GRID_LAYOUTS:
        raise ValueError(f"unknown grid topology {name!r}; expected one of {sorted(GRID_LAYOUTS)}")
    spacing, rows, cols, extra = GRID_LAYOUTS[key]
    return generate_grid(spacing, rows, cols, 9.0, extra_cells=extra, label=f"grid-{key}")


def _grid_scenario(name: str, **kw) -> Scenario:
    topo = grid_topology(name)
    _, rows, cols, _ = GRID_LAYOUTS[name.upper()]
    traffic = TrafficSpec(
        0,
        rows * cols - 1,
        replica_count=kw.pop("replica_count"),
        side_traffic_fraction=kw.pop("side_traffic_fraction", 0.0),
    )
    timing = TimingConfig(
        inter_pdu_range_ms=kw.pop("inter_pdu_ms"), scan_interval_ms=kw.pop("scan_interval_ms", 100.0)
    )
    per = PerMode.fixed(kw.pop("per"))
    if kw:
        raise TypeError(f"unexpected preset options: {sorted(kw)}")
    return Scenario(topo, traffic, per_mode=per, timing=timing)


def office_topology() -> Topology:
    """The bundled 28-relay office layout (ids 1..28)."""
    ref = resources.files("btmesh").joinpath("data/office28.json")
    with resources.as_file(ref) as path:
        return load_topology(path)


def office_interference_map() -> InterferenceMap:
    return generate_synthetic_map(OFFICE_HOTSPOTS, OFFICE_WINDOWS_S, OFFICE_WINDOW_GAIN_DB)


def preset(name: str | Preset, **options) -> Scenario:
    """A fully populated scenario for one of the named studies.

    ``options`` override the study's free parameters (the axes its cells
    sweep), e.g. ``preset("replica-study", replica_count=0, per=0.05)``.
    """
    try:
        which = Preset(name)
    except ValueError:
        raise ValueError(f"unknown preset {name!r}; expected one of {[p.value for p in Preset]}") from None
    unknown = set(options) - set(PRESET_OPTIONS[which])
    if unknown:
        raise TypeError(f"preset {which.value} does not accept {sorted(unknown)}; options: {list(PRESET_OPTIONS[which])}")
    opts = dict(options)
    if which is Preset.REPLICA_STUDY:
        return _grid_scenario(
            "B",
            replica_count=opts.pop("replica_count", 1),
            per=opts.pop("per", 0.1),
            inter_pdu_ms=(3.0, 5.0),
            **opts,
        )
    if which is Preset.TIMING_MATRIX:
        return _grid_scenario(
            "B",
            replica_count=1,
            per=0.0,
            inter_pdu_ms=tuple(opts.pop("inter_pdu_ms", INTER_PDU_RANGES_MS[0])),
            scan_interval_ms=float(opts.pop("scan_interval_ms", SCAN_INTERVALS_MS[0])),
            **opts,
        )
    if which in (Preset.SCALABILITY_A, Preset.SCALABILITY_B, Preset.SCALABILITY_C, Preset.SCALABILITY_D):
        return _grid_scenario(
            which.value[-1],
            replica_count=1,
            per=opts.pop("per", 0.1),
            inter_pdu_ms=(3.0, 5.0),
            **opts,
        )
    if which in (Preset.SIDE_TRAFFIC_SHORT, Preset.SIDE_TRAFFIC_LONG):
        ipdu = (0.1, 1.0) if which is Preset.SIDE_TRAFFIC_SHORT else (3.0, 5.0)
        return _grid_scenario(
            opts.pop("topology", "B"),
            replica_count=1,
            per=opts.pop("per", 0.0),
            inter_pdu_ms=ipdu,
            side_traffic_fraction=opts.pop("side_traffic_fraction", 0.1),
            **opts,
        )
    # office interference
    with_wlan = opts.pop("interference", True)
    window = int(opts.pop("window", 2))
    kind = PerKind(opts.pop("per_kind", PerKind.SINR_COMPLEMENT.value))
    if opts:
        raise TypeError(f"unexpected preset options: {sorted(opts)}")
    return Scenario(
        office_topology(),
        TrafficSpec(1, 2, replica_count=1),
        radio=RadioParams(noise_floor_dbm=-106.0, sensitivity_dbm=-85.0),
        per_mode=PerMode(kind),
        timing=TimingConfig(inter_pdu_range_ms=(3.0, 5.0)),
        interference=office_interference_map() if with_wlan else None,
        interference_window=window if with_wlan else 0,
    )


def preset_cells(name: str | Preset) -> list[tuple[dict, Scenario]]:
    """Every cell of a study as (parameters, scenario), in a fixed order."""
    which = Preset(name)
    grid: list[dict]
    if which is Preset.REPLICA_STUDY:
        grid = [{"replica_count": rc, "per": p} for rc in (0, 1) for p in REPLICA_STUDY_PER]
    elif which is Preset.TIMING_MATRIX:
        grid = [
            {"inter_pdu_ms": list(ipdu), "scan_interval_ms": si}
            for ipdu in INTER_PDU_RANGES_MS
            for si in SCAN_INTERVALS_MS
        ]
    elif which in (Preset.SIDE_TRAFFIC_SHORT, Preset.SIDE_TRAFFIC_LONG):
        grid = [{"topology": t, "per": p} for t in "ABCD" for p in SCALABILITY_PER]
    elif which is Preset.OFFICE_INTERFERENCE:
        grid = [{"interference": False}] + [{"window": w} for w in range(len(OFFICE_WINDOWS_S))]
    else:
        grid = [{"per": p} for p in SCALABILITY_PER]
    return [(params, preset(which, **params)) for params in grid]
