"""Discrete-event simulator of Bluetooth Mesh managed flooding over BLE advertising."""

__version__ = "0.1.0"

from .engine import ReplicationPlan, derive_seed, run_experiment, run_replication
from .interference import InterferenceMap, adapt_power, build_map, generate_synthetic_map, map_channel
from .metrics import AggregateMetrics, Outcome, RunMetrics
from .node import MeshPdu, NodeConfig, TimingConfig
from .radio import AdvChannel, PerKind, PerMode, RadioParams
from .scenario import Preset, Scenario, Topology, TrafficSpec, generate_grid, load_scenario, preset

__all__ = [
    "AdvChannel",
    "AggregateMetrics",
    "InterferenceMap",
    "MeshPdu",
    "NodeConfig",
    "Outcome",
    "PerKind",
    "PerMode",
    "Preset",
    "RadioParams",
    "ReplicationPlan",
    "RunMetrics",
    "Scenario",
    "TimingConfig",
    "Topology",
    "TrafficSpec",
    "adapt_power",
    "build_map",
    "derive_seed",
    "generate_grid",
    "generate_synthetic_map",
    "load_scenario",
    "map_channel",
    "preset",
    "run_experiment",
    "run_replication",
]
