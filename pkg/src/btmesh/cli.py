"""Command-line front end.

    btmesh run (SCENARIO | --preset NAME) [--option k=v ...]
    btmesh preset NAME [--option k=v ...] [-o FILE] | --list
    btmesh validate FILE
    btmesh synth-map --hotspot X,Y,PEAK,DECAY[,CH154] ... -o FILE
    btmesh sweep (SCENARIO | --preset NAME) --grid k=v1,v2 ...

Every run writes summary.json, replications.csv, links.csv and
config_echo.json; multi-cell runs write one such set per cell under
cell_NNN/ plus a sweep_index.csv.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import sys
from pathlib import Path

from . import __version__
from .engine import ReplicationPlan, derive_seed, run_experiment
from .interference import Hotspot, generate_synthetic_map, save_map
from .metrics import dump_json, link_traffic_map, write_links_csv, write_replications_csv
from .radio import PerMode
from .scenario import (
    PRESET_OPTIONS,
    Preset,
    Scenario,
    SchemaError,
    load_scenario,
    preset,
    preset_cells,
)

OUTPUT_DIR_ENV = "BTMESH_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "btmesh-out"

# sweepable scenario fields; short aliases map onto Scenario.with_changes keys
SCENARIO_FIELDS = {
    "per": "per",
    "inter_pdu_ms": "timing.inter_pdu_range_ms",
    "backoff_ms": "timing.backoff_range_ms",
    "scan_interval_ms": "timing.scan_interval_ms",
    "scan_window_ms": "timing.scan_window_ms",
    "replica_count": "traffic.replica_count",
    "replica_gap_ms": "traffic.replica_gap_ms",
    "side_traffic_fraction": "traffic.side_traffic_fraction",
    "interference_window": "interference_window",
}
SCENARIO_FIELDS.update({v: v for v in list(SCENARIO_FIELDS.values())})


class CliError(Exception):
    pass


def parse_value(text: str):
    """``8:10`` -> [8.0, 10.0]; true/false -> bool; numbers; otherwise the string."""
    t = text.strip()
    if ":" in t:
        return [parse_value(p) for p in t.split(":")]
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def parse_assignments(items: list[str] | None) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise CliError(f"expected key=value, got {item!r}")
        out[key.strip()] = parse_value(value)
    return out


def parse_grid(items: list[str] | None) -> dict[str, list]:
    grid = {}
    for item in items or []:
        key, sep, values = item.partition("=")
        if not sep or not key or not values.strip():
            raise CliError(f"expected name=v1,v2,..., got {item!r}")
        grid[key.strip()] = [parse_value(v) for v in values.split(",")]
    if not grid:
        raise CliError("empty parameter grid")
    return grid


def apply_fields(scenario: Scenario, params: dict) -> Scenario:
    changes = {}
    for name, value in params.items():
        if name not in SCENARIO_FIELDS:
            raise CliError(f"unknown scenario parameter {name!r}")
        key = SCENARIO_FIELDS[name]
        if key == "per":
            changes["per_mode"] = PerMode(scenario.per_mode.kind, float(value))
        elif isinstance(value, list):
            changes[key] = tuple(float(v) for v in value)
        else:
            changes[key] = value
    try:
        return scenario.with_changes(**changes)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid parameter value: {exc}") from None


def preset_with(name: str, params: dict) -> Scenario:
    """A preset with its own options plus any scenario-field overrides."""
    which = Preset(name)
    own = {k: v for k, v in params.items() if k in PRESET_OPTIONS[which]}
    rest = {k: v for k, v in params.items() if k not in own}
    for k, v in own.items():
        if isinstance(v, list):
            own[k] = tuple(v)
    try:
        scenario = preset(which, **own)
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from None
    return apply_fields(scenario, rest) if rest else scenario


def resolve_output_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)


# -- running ---------------------------------------------------------------

def run_cell(scenario: Scenario, plan: ReplicationPlan, out: Path, workers: int, verify: bool) -> dict:
    """Run one scenario and write its output set; returns the summary."""
    result = run_experiment(scenario, plan, workers=workers, keep_rows=True)
    summary = build_summary(scenario, plan, result.aggregate)
    if verify:
        again = run_experiment(scenario, plan, workers=1 if workers > 1 else 2)
        if json.dumps(build_summary(scenario, plan, again.aggregate), sort_keys=True) != json.dumps(summary, sort_keys=True):
            raise RuntimeError("determinism violated: identical seed produced a different summary")
    out.mkdir(parents=True, exist_ok=True)
    dump_json(out / "summary.json", summary)
    write_replications_csv(out / "replications.csv", result.rows)
    write_links_csv(out / "links.csv", link_traffic_map(result.aggregate, scenario.topology.positions()))
    echo = scenario.to_dict()
    echo["plan"] = {
        "seed": plan.seed,
        "replications": plan.replications,
        "horizon_ms": plan.horizon_ms,
        "warmup_ms": plan.warmup_ms,
    }
    dump_json(out / "config_echo.json", echo)
    return summary


def build_summary(scenario: Scenario, plan: ReplicationPlan, aggregate) -> dict:
    data = aggregate.summary()
    data["label"] = scenario.topology.label
    data["nodes"] = len(scenario.topology)
    data["seed"] = plan.seed
    data["horizon_ms"] = plan.horizon_ms
    return data


def _fmt(v, fmt=".4f") -> str:
    return "-" if v is None else format(v, fmt)


def print_table(rows: list[tuple[str, dict]], stream=None) -> None:
    stream = stream or sys.stdout
    header = f"{'cell':<44} {'reps':>6} {'loss':>7} {'loss 95% CI':>17} {'avg ms':>8} {'max ms':>8} {'congestion':>10}"
    print(header, file=stream)
    print("-" * len(header), file=stream)
    for name, s in rows:
        lo, hi = s["loss_rate_ci95"]
        print(
            f"{name[:44]:<44} {s['replications']:>6} {s['loss_rate']:>7.4f} "
            f"{'[' + format(lo, '.4f') + ',' + format(hi, '.4f') + ']':>17} "
            f"{_fmt(s['avg_delay_ms'], '.1f'):>8} {_fmt(s['max_delay_ms'], '.1f'):>8} "
            f"{_fmt(s['congestion_probability']):>10}",
            file=stream,
        )


def _cell_name(params: dict) -> str:
    return " ".join(f"{k}={':'.join(map(str, v)) if isinstance(v, list) else v}" for k, v in params.items()) or "default"


def run_cells(cells: list[tuple[dict, Scenario]], args, out: Path, master_seed: int) -> None:
    index_rows = []
    table = []
    for k, (params, scenario) in enumerate(cells):
        plan = make_plan(args, derive_seed(master_seed, k))
        cell_dir = out / f"cell_{k:03d}"
        summary = run_cell(scenario, plan, cell_dir, args.workers, args.verify_determinism)
        index_rows.append(
            {"cell": k, "dir": cell_dir.name, "seed": plan.seed, "params": json.dumps(params, sort_keys=True),
             "loss_rate": summary["loss_rate"], "avg_delay_ms": summary["avg_delay_ms"]}
        )
        table.append((_cell_name(params), summary))
    with open(out / "sweep_index.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(index_rows[0]))
        writer.writeheader()
        writer.writerows(index_rows)
    print_table(table)


def make_plan(args, seed: int, file_plan: dict | None = None) -> ReplicationPlan:
    file_plan = file_plan or {}
    reps = args.replications if args.replications is not None else int(file_plan.get("replications", 10_000))
    horizon = args.horizon_ms if args.horizon_ms is not None else float(file_plan.get("horizon_ms", 10_000.0))
    warmup = float(file_plan.get("warmup_ms", 0.0))
    return ReplicationPlan(seed=seed, replications=reps, warmup_ms=warmup, horizon_ms=horizon)


def _base(args) -> tuple[Scenario | None, dict]:
    if (args.scenario is None) == (args.preset is None):
        raise CliError("give exactly one of a scenario file or --preset")
    if args.scenario is not None:
        scenario, plan = load_scenario(args.scenario)
        return scenario, plan
    return None, {}


def cmd_run(args) -> int:
    scenario, file_plan = _base(args)
    out = resolve_output_dir(args.output_dir)
    options = parse_assignments(args.option)
    if scenario is not None:
        scenario = apply_fields(scenario, options) if options else scenario
        seed = args.seed if args.seed is not None else int(file_plan.get("seed", 0))
        plan = make_plan(args, seed, file_plan)
        summary = run_cell(scenario, plan, out, args.workers, args.verify_determinism)
        print_table([(scenario.topology.label or Path(args.scenario).stem, summary)])
        return 0
    seed = args.seed if args.seed is not None else 0
    if options:
        scenario = preset_with(args.preset, options)
        summary = run_cell(scenario, make_plan(args, seed), out, args.workers, args.verify_determinism)
        print_table([(f"{args.preset} {_cell_name(options)}", summary)])
        return 0
    run_cells(preset_cells(args.preset), args, out, seed)
    return 0


def cmd_sweep(args) -> int:
    scenario, file_plan = _base(args)
    grid = parse_grid(args.grid)
    names = list(grid)
    if scenario is not None:
        unknown = [n for n in names if n not in SCENARIO_FIELDS]
    else:
        allowed = set(PRESET_OPTIONS[Preset(args.preset)]) | set(SCENARIO_FIELDS)
        unknown = [n for n in names if n not in allowed]
    if unknown:
        raise CliError(f"unknown sweep parameter(s) {unknown}")
    cells = []
    for combo in itertools.product(*(grid[n] for n in names)):
        params = dict(zip(names, combo))
        if scenario is not None:
            cells.append((params, apply_fields(scenario, params)))
        else:
            cells.append((params, preset_with(args.preset, params)))
    seed = args.seed if args.seed is not None else int(file_plan.get("seed", 0))
    out = resolve_output_dir(args.output_dir)
    run_cells(cells, args, out, seed)
    return 0


def cmd_preset(args) -> int:
    if args.list:
        for p in Preset:
            print(f"{p.value:<22} cells={len(preset_cells(p)):<4} options: {', '.join(PRESET_OPTIONS[p])}")
        return 0
    if args.name is None:
        raise CliError("preset name required (or --list)")
    scenario = preset_with(args.name, parse_assignments(args.option))
    text = scenario.to_json()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_validate(args) -> int:
    scenario, plan = load_scenario(args.file)
    print(f"{args.file}: ok ({len(scenario.topology)} nodes, per_mode={scenario.per_mode.kind.value})")
    return 0


def cmd_synth_map(args) -> int:
    hotspots = []
    for item in args.hotspot or []:
        parts = [p.strip() for p in item.split(",")]
        if len(parts) not in (4, 5):
            raise CliError(f"hotspot needs X,Y,PEAK_DBM,DECAY_DB_PER_M[,CH154], got {item!r}")
        x, y, peak, decay = (float(p) for p in parts[:4])
        ch = int(parts[4]) if len(parts) == 5 else None
        hotspots.append(Hotspot((x, y), peak, decay, ch))
    windows = []
    for w in args.window or ["0:3600"]:
        a, sep, b = w.partition(":")
        if not sep:
            raise CliError(f"window must be START:END seconds, got {w!r}")
        windows.append((float(a), float(b)))
    gains = [float(g) for g in args.gain_db.split(",")] if args.gain_db else None
    try:
        imap = generate_synthetic_map(hotspots, windows, gains)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    save_map(imap, args.output)
    print(f"wrote {args.output} ({len(hotspots)} hotspots, {len(windows)} windows)")
    return 0


# -- argument parsing ------------------------------------------------------

def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", nargs="?", help="scenario file (JSON)")
    p.add_argument("--preset", choices=[x.value for x in Preset], help="named study instead of a file")
    p.add_argument("--seed", type=int, help="master seed (default: the file's plan.seed, else 0)")
    p.add_argument("--replications", type=int, help="replications per cell (default 10000)")
    p.add_argument("--horizon-ms", type=float, help="measurement horizon per replication")
    p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on this)")
    p.add_argument("--output-dir", help=f"output directory (default ${OUTPUT_DIR_ENV} or ./{DEFAULT_OUTPUT_DIR})")
    p.add_argument("--verify-determinism", action="store_true",
                   help="re-run each cell with another worker count and require identical summaries")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="btmesh", description="Bluetooth Mesh managed-flooding simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario file or every cell of a preset")
    _add_run_options(p)
    p.add_argument("--option", action="append", metavar="KEY=VALUE",
                   help="preset option or scenario field override; with --preset this selects a single cell")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="cross-product over scenario fields or preset options")
    _add_run_options(p)
    p.add_argument("--grid", action="append", metavar="NAME=V1,V2,...", help="one axis of the grid (repeatable)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("preset", help="print a preset as a scenario file")
    p.add_argument("name", nargs="?", choices=[x.value for x in Preset])
    p.add_argument("--option", action="append", metavar="KEY=VALUE")
    p.add_argument("-o", "--output", help="write to this file instead of stdout")
    p.add_argument("--list", action="store_true", help="list presets and their options")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth-map", help="write a synthetic interference map")
    p.add_argument("--hotspot", action="append", metavar="X,Y,PEAK_DBM,DECAY[,CH154]")
    p.add_argument("--window", action="append", metavar="START:END", help="time window in seconds (repeatable)")
    p.add_argument("--gain-db", help="comma-separated per-window gain")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth_map)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
