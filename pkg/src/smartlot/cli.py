"""parkctl: run seeded simulations, replay and summarize logs, decode frames.

Everything on stdout is JSON; diagnostics go to stderr.
"""

from __future__ import annotations

import json
import logging
import os
import sys

import click

from . import protocol
from .api import build_app, serve_in_thread
from .core import LotConfig
from .hub import CorruptRecord, GapDetected, Hub, initial_view, replay_log_file
from .report import compute_report
from .sim import Scenario, run_simulation

log = logging.getLogger("parkctl")


def _setup_logging() -> None:
    level = os.environ.get("PARKCTL_LOG_LEVEL", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(stream=sys.stderr,
                        level=levels.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _dump(obj, pretty: bool) -> None:
    click.echo(json.dumps(obj, indent=2 if pretty else None))


@click.group()
def main() -> None:
    _setup_logging()


@main.command("sim")
@click.option("--slots", default=4, show_default=True, type=int)
@click.option("--lot-id", default=1, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--arrival-rate", default=0.0, show_default=True, type=float,
              help="Expected arrivals per second.")
@click.option("--mean-stay", default=600.0, show_default=True, type=float,
              help="Mean parking duration in seconds.")
@click.option("--horizon", default=3600.0, show_default=True, type=float,
              help="Simulated duration in seconds.")
@click.option("--flicker", default=0.0, show_default=True, type=float,
              help="Per-sample probability of an inverted sensor bit.")
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, dir_okay=False),
              help="Scenario JSON file; overrides the individual traffic flags.")
@click.option("--log", "log_path", type=click.Path(dir_okay=False),
              help="Write the event log (JSON Lines) here.")
@click.option("--serve", "serve_addr", metavar="ADDR",
              help="Host the hub HTTP API at HOST:PORT during the run (implies --realtime).")
@click.option("--realtime", is_flag=True, help="Pace the run at wall-clock speed.")
@click.option("--pretty", is_flag=True)
@click.option("--debounce-k", default=3, show_default=True, type=int)
@click.option("--barrier-open-ms", default=2000, show_default=True, type=int)
@click.option("--barrier-hold-ms", default=8000, show_default=True, type=int)
@click.option("--barrier-close-ms", default=2000, show_default=True, type=int)
def cmd_sim(slots, lot_id, seed, arrival_rate, mean_stay, horizon, flicker,
            scenario_path, log_path, serve_addr, realtime, pretty,
            debounce_k, barrier_open_ms, barrier_hold_ms, barrier_close_ms):
    """Run a seeded lot simulation and print its summary."""
    try:
        config = LotConfig(
            lot_id=lot_id, slot_count=slots, debounce_k=debounce_k,
            barrier_open_ms=barrier_open_ms, barrier_hold_ms=barrier_hold_ms,
            barrier_close_ms=barrier_close_ms)
        if scenario_path:
            with open(scenario_path, encoding="utf-8") as fh:
                scenario = Scenario.from_json(fh.read())
        else:
            scenario = Scenario(
                seed=seed, arrival_rate=arrival_rate, mean_stay_s=mean_stay,
                horizon_ms=int(horizon * 1000), flicker_p=flicker)
    except ValueError as exc:
        click.echo(f"parkctl: {exc}", err=True)
        sys.exit(2)

    server = None
    injections = None
    try:
        hub = Hub(log_path=log_path)
        pace = None
        if serve_addr:
            injections = []
            hub.sim_injector = injections.append
            host, _, port = serve_addr.rpartition(":")
            server, _thread = serve_in_thread(build_app(hub), host or "127.0.0.1", int(port))
            pace = config.sample_period_ms / 1000.0
            log.info("hub API listening on %s", serve_addr)
        elif realtime:
            pace = config.sample_period_ms / 1000.0

        result = run_simulation(config, scenario, hub=hub,
                                pace_s_per_tick=pace, injections=injections)
        view = hub.snapshot(lot_id)
        _dump({
            "report": result.stats.to_dict(),
            "final_view": view.to_api_dict(hub.now_ms(), hub.heartbeat_ms),
        }, pretty)
        hub.close()
    except Exception as exc:
        log.debug("simulation failed", exc_info=True)
        click.echo(f"parkctl: {exc}", err=True)
        sys.exit(1)
    finally:
        if server is not None:
            server.should_exit = True


@main.command("replay")
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--slots", default=4, show_default=True, type=int)
@click.option("--lot-id", default=1, show_default=True, type=int)
@click.option("--pretty", is_flag=True)
def cmd_replay(log_path, slots, lot_id, pretty):
    """Reconstruct the final lot view from an event log."""
    try:
        views = replay_log_file(log_path, configs={lot_id: slots})
    except (GapDetected, CorruptRecord) as exc:
        where = f" at line {exc.line_no}" if exc.line_no else ""
        click.echo(f"parkctl: {type(exc).__name__}{where}: {exc}", err=True)
        sys.exit(1)
    if not views:
        views = {lot_id: initial_view(lot_id, slots)}
    rendered = [v.to_api_dict(v.updated_at_ms)
                for _, v in sorted(views.items())]
    _dump(rendered[0] if len(rendered) == 1 else rendered, pretty)


@main.command("report")
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--pretty", is_flag=True)
def cmd_report(log_path, pretty):
    """Summarize occupancy and traffic outcomes from an event log."""
    from .hub import iter_log_lines
    try:
        with open(log_path, encoding="utf-8") as fh:
            records = [rec for _, rec in iter_log_lines(fh)]
    except (GapDetected, CorruptRecord) as exc:
        where = f" at line {exc.line_no}" if exc.line_no else ""
        click.echo(f"parkctl: {type(exc).__name__}{where}: {exc}", err=True)
        sys.exit(1)
    _dump(compute_report(records).to_dict(), pretty)


@main.command("decode")
@click.argument("hex_text")
@click.option("--pretty", is_flag=True)
def cmd_decode(hex_text, pretty):
    """Decode a hex-encoded wire frame."""
    try:
        data = bytes.fromhex(hex_text.strip())
    except ValueError:
        click.echo("parkctl: input is not valid hex", err=True)
        sys.exit(2)
    try:
        frame, _ = protocol.decode_frame(data)
    except protocol.ProtocolError as exc:
        _dump({"error": type(exc).__name__}, pretty)
        sys.exit(1)
    _dump(protocol.frame_to_dict(frame), pretty)


if __name__ == "__main__":
    main()
