import math

import pytest

from btmesh.node import NodeConfig, TimingConfig
from btmesh.radio import PerMode
from btmesh.scenario import Scenario, Topology, TrafficSpec


def line_topology(n: int, spacing: float = 8.0, radio_range: float = 9.0) -> Topology:
    return Topology(tuple(NodeConfig(i, (i * spacing, 0.0)) for i in range(n)), radio_range, f"line-{n}")


def small_scenario(
    positions,
    source=0,
    destination=1,
    per=0.0,
    timing: TimingConfig | None = None,
    radio_range=9.0,
    **traffic,
) -> Scenario:
    topo = Topology(tuple(NodeConfig(i, p) for i, p in enumerate(positions)), radio_range)
    return Scenario(
        topo,
        TrafficSpec(source, destination, **traffic),
        per_mode=PerMode.fixed(per),
        timing=timing or TimingConfig(),
    )


def binomial_3sigma(p: float, n: int) -> float:
    return 3.0 * math.sqrt(max(p * (1.0 - p), 1e-12) / n)


@pytest.fixture
def report(capsys):
    """Print a line straight to the terminal, bypassing output capture."""

    def _print(line: str) -> None:
        with capsys.disabled():
            print(line)

    return _print
