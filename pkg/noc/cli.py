"""
Command-line entry point.

    python -m noc.cli run --config exp.cfg --variant h_xy --rate 0.1 --seeds 5
    python -m noc.cli sweep --rates 0.05,0.1,0.2 --out results.csv
    python -m noc.cli reconfig --kx 3 --ky 3 --faults-file fig2.faults

Exit status 2 means a configuration problem; 3 means the deadlock watchdog fired.
"""

import functools
import io
import logging
import sys
from pathlib import Path
from typing import Optional

import click
from pydantic import ValidationError

from noc.errors import DeadlockDetected, HermesError
from noc.harness import (
    build_scenario,
    dynamic_fault_experiment,
    initial_reconfiguration,
    run_point,
    saturation_throughput,
    sweep_and_emit,
    sweep_rows,
    run_points,
    write_csv,
    write_link_loads,
    zero_load_latency,
)
from noc.reports import cdg_report, format_reconfig_report
from noc.simcore import EventTrace
from noc.topology import dump_faults
from schemas.experiments import ExperimentConfig
from utils.config import configure_logging, load_config_file

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_DEADLOCK = 3


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DeadlockDetected as e:
            click.echo(f"deadlock: {e}", err=True)
            sys.exit(EXIT_DEADLOCK)
        except (ValidationError, HermesError, FileNotFoundError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_CONFIG)
    return wrapper


def experiment_options(fn):
    options = [
        click.option("--config", "config_file", type=click.Path(dir_okay=False), help="flat key=value experiment file"),
        click.option("--kx", type=int),
        click.option("--ky", type=int),
        click.option("--variant", type=click.Choice(["pure_ud", "h_xy", "h_o1turn"])),
        click.option("--vcs", type=int),
        click.option("--faults", type=int, help="unidirectional faulty links"),
        click.option("--fault-percent", type=float),
        click.option("--placement", type=click.Choice(["random", "hotspot"])),
        click.option("--faults-file", type=click.Path(exists=True, dir_okay=False)),
        click.option("--initiator", type=int, help="node whose window opens the reconfiguration epoch"),
        click.option("--fault-event", "fault_events", multiple=True,
                     help="mid-run faults as CYCLE:COUNT or CYCLE:4S/7E; repeatable"),
        click.option("--pattern", "--traffic", "pattern", type=click.Choice(["uniform", "transpose", "trace"])),
        click.option("--rate", type=float),
        click.option("--rates", help="comma separated offered rates"),
        click.option("--seeds", type=int, help="number of seeds, 0..n-1"),
        click.option("--trace-file", type=click.Path(exists=True, dir_okay=False)),
        click.option("--workers", type=int),
        click.option("--warmup", "warmup_cycles", type=int),
        click.option("--measure", "measure_cycles", type=int),
        click.option("--dump-reconfig", type=click.Path(dir_okay=False), help="write the reconfiguration report ('-' for stdout)"),
        click.option("--dump-cdg", type=click.Path(dir_okay=False), help="write the channel dependency graph as DOT"),
        click.option("-v", "--verbose", is_flag=True),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def build_config(config_file: Optional[str], **overrides) -> ExperimentConfig:
    values = load_config_file(config_file) if config_file else {}
    return ExperimentConfig.from_flat(values, **overrides)


def _write(path: str, text: str):
    if path == "-":
        click.echo(text, nl=False)
    else:
        Path(path).write_text(text)


def _dumps(cfg: ExperimentConfig, dump_reconfig: Optional[str], dump_cdg: Optional[str]):
    if not dump_reconfig and not dump_cdg:
        return
    topology, faults = build_scenario(cfg, cfg.seeds[0])
    outcome = initial_reconfiguration(cfg, topology, faults)
    if dump_reconfig:
        _write(dump_reconfig, format_reconfig_report(topology, outcome))
    if dump_cdg:
        summary = cdg_report(topology, outcome, cfg.variant, cfg.vcs)
        _write(dump_cdg, summary.dot)
        if summary.acyclic:
            click.echo(f"channel dependency graph: acyclic ({summary.vertices} channels, {summary.edges} dependencies)", err=True)
        else:
            cycle = " -> ".join(f"{link}/{vc}" for link, vc in summary.witness)
            click.echo(f"channel dependency graph: CYCLE {cycle}", err=True)


def _prepare(ctx_kwargs: dict) -> tuple[ExperimentConfig, Optional[str], Optional[str]]:
    configure_logging(level=logging.DEBUG if ctx_kwargs.pop("verbose") else None)
    dump_reconfig = ctx_kwargs.pop("dump_reconfig")
    dump_cdg = ctx_kwargs.pop("dump_cdg")
    cfg = build_config(ctx_kwargs.pop("config_file"), **ctx_kwargs)
    return cfg, dump_reconfig, dump_cdg


@click.group(name="hermes-noc")
def cli():
    """Fault-tolerant mesh NoC simulator."""


@cli.command()
@experiment_options
@click.option("--out", type=click.Path(dir_okay=False), help="CSV output (default stdout)")
@click.option("--event-trace", type=click.Path(dir_okay=False), help="per-cycle event CSV for the first point")
@click.option("--link-loads", type=click.Path(dir_okay=False), help="per-link flit counts of the first point")
@_guarded
def run(out, event_trace, link_loads, **kwargs):
    """Simulate every configured rate and seed and print the CSV."""
    cfg, dump_reconfig, dump_cdg = _prepare(kwargs)
    _dumps(cfg, dump_reconfig, dump_cdg)
    if event_trace:
        with open(event_trace, "w", newline="") as stream:
            first = run_point(cfg, cfg.rates[0], cfg.seeds[0], events=EventTrace(stream))
    elif link_loads:
        first = run_point(cfg, cfg.rates[0], cfg.seeds[0])
    if link_loads:
        write_link_loads(first, link_loads)
    if out:
        sweep_and_emit(cfg, out)
        return
    tasks = [(rate, seed) for rate in sorted(set(cfg.rates)) for seed in sorted(set(cfg.seeds))]
    buffer = io.StringIO()
    write_csv(sweep_rows(cfg, run_points(cfg, tasks)), buffer)
    click.echo(buffer.getvalue(), nl=False)


@cli.command()
@experiment_options
@click.option("--out", type=click.Path(dir_okay=False), default="results.csv", show_default=True)
@_guarded
def sweep(out, **kwargs):
    """Rate sweep with a progress bar, written to --out."""
    cfg, dump_reconfig, dump_cdg = _prepare(kwargs)
    _dumps(cfg, dump_reconfig, dump_cdg)
    records = sweep_and_emit(cfg, out, progress=True)
    click.echo(f"wrote {len(records)} points to {out}")


@cli.command("zero-load")
@experiment_options
@_guarded
def zero_load(**kwargs):
    """Average latency at 0.01 flits/node/cycle."""
    cfg, dump_reconfig, dump_cdg = _prepare(kwargs)
    _dumps(cfg, dump_reconfig, dump_cdg)
    click.echo(repr(zero_load_latency(cfg)))


@cli.command()
@experiment_options
@_guarded
def saturation(**kwargs):
    """Offered rate at which latency reaches three times zero-load latency."""
    cfg, dump_reconfig, dump_cdg = _prepare(kwargs)
    _dumps(cfg, dump_reconfig, dump_cdg)
    click.echo(saturation_throughput(cfg).model_dump_json(indent=2))


@cli.command()
@experiment_options
@click.option("--out", type=click.Path(dir_okay=False), help="binned latency CSV")
@_guarded
def dynamic(out, **kwargs):
    """Inject concurrent faults mid-run and report latency over time."""
    cfg, dump_reconfig, dump_cdg = _prepare(kwargs)
    _dumps(cfg, dump_reconfig, dump_cdg)
    series = dynamic_fault_experiment(cfg)
    if out:
        lines = ["start_cycle,avg_latency,packets"]
        for b in series.bins:
            lines.append(f"{b.start_cycle},{'' if b.avg_latency is None else repr(b.avg_latency)},{b.packets}")
        Path(out).write_text("\n".join(lines) + "\n")
    click.echo(series.model_dump_json(indent=2, exclude={"bins"}))


@cli.command()
@experiment_options
@click.option("--save-faults", type=click.Path(dir_okay=False), help="write the drawn fault set")
@_guarded
def reconfig(save_faults, **kwargs):
    """Run one reconfiguration epoch and print the report."""
    cfg, dump_reconfig, dump_cdg = _prepare(kwargs)
    topology, faults = build_scenario(cfg, cfg.seeds[0])
    if save_faults:
        Path(save_faults).write_text(dump_faults(faults))
    outcome = initial_reconfiguration(cfg, topology, faults)
    report = format_reconfig_report(topology, outcome)
    _write(dump_reconfig or "-", report)
    if dump_cdg:
        _dumps(cfg, None, dump_cdg)


if __name__ == "__main__":
    cli()
