"""Command line entry point.

Four subcommands: ``run`` a scenario headless, ``serve`` it live over the
teleop sockets, ``replay`` a recorded log for console playback, and ``scale``
to print the breadboard dimension table. Exit codes: 0 nominal, 1 input
error, 2 run ended by a terminal event.
"""

from __future__ import annotations

import argparse
import signal
import sys
import threading
import time
from dataclasses import replace
from pathlib import Path

from .core import DomainError, RoverGeometry, breadboard_scale
from .sim import (
    RecordDecimator,
    World,
    load_scenario,
    log_to_text,
    metrics_to_csv,
    metrics_to_json,
    record_from_json,
    run_scenario,
    step_sim,
    world_metrics,
)
from .suspension import stow_envelope
from .telemetry import TelemetryServer


class _Parser(argparse.ArgumentParser):
    """Argument errors are input errors, exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="emrs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument(
            "--scenario", required=True,
            help="bundled scenario name or path to a scenario JSON file",
        )
        p.add_argument(
            "--out", default=".",
            help="directory for the telemetry log and metrics (default: .)",
        )
        p.add_argument(
            "--rate", type=float, default=10.0,
            help="telemetry rate in Hz, 1 to 100 (default: 10)",
        )
        p.add_argument(
            "--seed-override", type=int, default=None,
            help="replace the scenario's random seed",
        )

    p_run = sub.add_parser("run", help="run a scenario headless")
    scenario_args(p_run)
    p_run.set_defaults(func=cmd_run)

    p_serve = sub.add_parser("serve", help="run a scenario with live teleop sockets")
    scenario_args(p_serve)
    p_serve.add_argument("--port", type=int, default=None, help="TCP telemetry port")
    p_serve.add_argument("--ws-port", type=int, default=None, help="WebSocket port")
    p_serve.add_argument(
        "--realtime", type=float, default=1.0,
        help="wall-clock factor; 0 runs as fast as possible with clients read-only",
    )
    p_serve.set_defaults(func=cmd_serve)

    p_replay = sub.add_parser("replay", help="re-broadcast a recorded telemetry log")
    p_replay.add_argument("log", help="telemetry log file (one JSON record per line)")
    p_replay.add_argument("--port", type=int, default=None, help="TCP telemetry port")
    p_replay.add_argument("--ws-port", type=int, default=None, help="WebSocket port")
    p_replay.add_argument(
        "--realtime", type=float, default=1.0,
        help="playback speed factor; 0 emits all frames immediately",
    )
    p_replay.set_defaults(func=cmd_replay)

    p_scale = sub.add_parser("scale", help="print the breadboard scaling table")
    p_scale.add_argument(
        "--ratio", type=float, default=1.0 / 6.0,
        help="gravity ratio for the analog site (default: 1/6)",
    )
    p_scale.set_defaults(func=cmd_scale)
    return parser


def _load(args):
    scenario = load_scenario(args.scenario)
    if args.seed_override is not None:
        scenario = replace(scenario, seed=args.seed_override)
    return scenario


def _write_outputs(out_dir: str, name: str, records, metrics) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / f"{name}.telemetry.jsonl"
    log_path.write_text(log_to_text(records), encoding="utf-8")
    (out / f"{name}.metrics.json").write_text(metrics_to_json(metrics), encoding="utf-8")
    (out / f"{name}.metrics.csv").write_text(metrics_to_csv(metrics), encoding="utf-8")
    return log_path


def _report(metrics) -> int:
    print(
        f"{metrics['scenario']}: {metrics['ticks']} ticks, "
        f"{metrics['sim_time']:.2f} s, distance {metrics['distance']:.3f} m, "
        f"final state {metrics['final_state']}"
    )
    if metrics["terminal"]:
        print(f"terminal event: {metrics['terminal']}", file=sys.stderr)
        return 2
    return 0


def cmd_run(args) -> int:
    scenario = _load(args)
    records, metrics = run_scenario(scenario, telemetry_rate=args.rate)
    log_path = _write_outputs(args.out, scenario.name, records, metrics)
    print(f"wrote {log_path}")
    return _report(metrics)


def cmd_serve(args) -> int:
    scenario = _load(args)
    server = TelemetryServer(port=args.port, ws_port=args.ws_port)
    try:
        server.open()
    except OSError as e:
        print(f"error: cannot bind: {e}", file=sys.stderr)
        return 1
    if args.realtime < 0.0:
        print("error: --realtime must be >= 0", file=sys.stderr)
        server.close()
        return 1

    stop = False

    def on_sigint(signum, frame):
        nonlocal stop
        stop = True

    previous = None
    if threading.current_thread() is threading.main_thread():
        previous = signal.signal(signal.SIGINT, on_sigint)
    print(f"listening tcp={server.port} ws={server.ws_port}", flush=True)

    world = World(scenario)
    decimator = RecordDecimator(args.rate, world.config.tick)
    ticks = round(scenario.duration / world.config.tick)
    records = []
    next_wall = time.monotonic()
    try:
        for _ in range(ticks):
            if stop:
                break
            if args.realtime > 0.0:
                next_wall += world.config.tick / args.realtime
                while not stop:
                    budget = next_wall - time.monotonic()
                    if budget <= 0.0:
                        break
                    server.pump(min(budget, 0.05))
                server.drain(world)
            else:
                server.pump(0.0)
                server.reject_pending("read-only")
            rec = step_sim(world)
            out = decimator.push(rec, force=world.terminal is not None)
            if out is not None:
                records.append(out)
                server.broadcast(out)
            if world.terminal is not None:
                break
    finally:
        server.pump(0.0)
        server.close()
        if previous is not None:
            signal.signal(signal.SIGINT, previous)
    metrics = world_metrics(world)
    log_path = _write_outputs(args.out, scenario.name, records, metrics)
    print(f"wrote {log_path}")
    return _report(metrics)


def cmd_replay(args) -> int:
    path = Path(args.log)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        print(f"error: cannot read log {args.log!r}: {e}", file=sys.stderr)
        return 1
    if args.realtime < 0.0:
        print("error: --realtime must be >= 0", file=sys.stderr)
        return 1
    records = []
    skipped = 0
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(record_from_json(line))
        except DomainError as e:
            skipped += 1
            print(f"warning: skipping line {n}: {e}", file=sys.stderr)
    if not records:
        print(f"replayed 0 frames, skipped {skipped} lines")
        return 0

    server = TelemetryServer(port=args.port, ws_port=args.ws_port)
    try:
        server.open()
    except OSError as e:
        print(f"error: cannot bind: {e}", file=sys.stderr)
        return 1
    print(f"listening tcp={server.port} ws={server.ws_port}", flush=True)
    try:
        previous_time = records[0].time
        for rec in records:
            if args.realtime > 0.0:
                deadline = time.monotonic() + (rec.time - previous_time) / args.realtime
                while True:
                    budget = deadline - time.monotonic()
                    if budget <= 0.0:
                        break
                    server.pump(min(budget, 0.05))
            else:
                server.pump(0.0)
            server.reject_pending("replay")
            server.broadcast(rec)
            previous_time = rec.time
        server.pump(0.0)
    finally:
        server.close()
    print(f"replayed {len(records)} frames, skipped {skipped} lines")
    return 0


_SCALED_DIMENSIONS = (
    ("wheelbase", lambda g: (g.wheelbase,)),
    ("track", lambda g: (g.track,)),
    ("wheel diameter", lambda g: (g.wheel.diameter,)),
    ("envelope stowed", lambda g: stow_envelope(g, True)),
    ("envelope deployed", lambda g: stow_envelope(g, False)),
)


def cmd_scale(args) -> int:
    factor = breadboard_scale(1.0, args.ratio)
    geom = RoverGeometry()
    print(f"gravity ratio {args.ratio:.4f}, length factor {factor:.3f}")
    rows = []
    for label, dims in _SCALED_DIMENSIONS:
        full = dims(geom)
        scaled = tuple(breadboard_scale(d, args.ratio) for d in full)
        rows.append((label, full, scaled))
    for module in geom.modules:
        scaled = tuple(breadboard_scale(d, args.ratio) for d in module.size)
        rows.append((f"module {module.name}", module.size, scaled))

    def fmt(values):
        return " x ".join(f"{v:.3f}" for v in values) + " m"

    width = max(len(r[0]) for r in rows)
    for label, full, scaled in rows:
        print(f"{label:<{width}}  full {fmt(full):>26}  breadboard {fmt(scaled):>26}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DomainError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
