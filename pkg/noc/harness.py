"""
Experiment orchestration: single points, zero-load and saturation searches,
the dynamic-fault time series and CSV sweeps.

Latency runs from packet creation to tail ejection, source queuing included.
Throughput counts flits ejected inside the measurement window.
"""

import csv
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO

from tqdm import tqdm

from noc.errors import ConfigurationError, DeadlockDetected
from noc.reconfig import ReconfigOutcome, run_reconfiguration, select_initiator
from noc.simcore import DropReason, EventTrace, Network, Packet, build_network
from noc.topology import (
    Direction,
    FaultSet,
    MeshTopology,
    Placement,
    UniLink,
    build_mesh,
    inject_hotspot_faults,
    inject_random_faults,
    load_faults,
    victimize_bidirectional,
)
from noc.traffic import SyntheticTraffic, TraceReplay, TrafficPattern, load_trace
from schemas.experiments import (
    DynamicSeries,
    ExperimentConfig,
    FaultEventConfig,
    LatencyBin,
    MetricsRecord,
    SaturationResult,
)

logger = logging.getLogger(__name__)

CSV_HEADER = ["variant", "vcs", "fault_count", "placement", "pattern", "rate", "seed", "avg_latency", "throughput", "drops"]
ZERO_LOAD_RATE = 0.01
SATURATION_FACTOR = 3.0
SATURATION_ITERATIONS = 8
MIN_COMPLETED_FRACTION = 0.95
STABLE_BAND = 1.25
DYNAMIC_SEED_OFFSET = 1_000_000
EVENT_SEED_OFFSET = 2_000_003
WATCHDOG_CHECK_EVERY = 1_000


def build_scenario(cfg: ExperimentConfig, seed: int) -> tuple[MeshTopology, FaultSet]:
    """Mesh with the configured faults applied, plus the fault set itself."""
    mesh = build_mesh(cfg.kx, cfg.ky)
    if cfg.faults_file:
        faults = load_faults(Path(cfg.faults_file).read_text(), mesh)
    elif cfg.placement == Placement.HOTSPOT:
        faults = inject_hotspot_faults(mesh, cfg.fault_count(), seed, cfg.require_connected)
    else:
        faults = inject_random_faults(mesh, cfg.fault_count(), seed, cfg.require_connected)
    faults = victimize_bidirectional(faults, mesh)
    return mesh.with_faults(faults), faults


def configured_fault_count(cfg: ExperimentConfig) -> int:
    """The fault tier as configured, or the links a fault file lists, before pairing."""
    if cfg.faults_file:
        return len(load_faults(Path(cfg.faults_file).read_text()))
    return cfg.fault_count()


def event_faults(
    cfg: ExperimentConfig, event: FaultEventConfig, mesh: MeshTopology, base: FaultSet, seed: int,
) -> FaultSet:
    """Faults of one mid-run event on top of ``base``: named links plus a random draw."""
    named = load_faults("\n".join(f"{link[:-1]} {link[-1]}" for link in event.links), mesh).faulty
    faults = FaultSet(base.faulty | named, Placement.RANDOM, seed)
    if event.faults:
        faults = inject_random_faults(mesh, event.faults, seed, cfg.require_connected, base=faults)
    return faults


def initial_reconfiguration(cfg: ExperimentConfig, topology: MeshTopology, faults: FaultSet) -> ReconfigOutcome:
    """Tables in force before the run starts; not counted in the run's cycles."""
    mesh = build_mesh(cfg.kx, cfg.ky)
    initiator = cfg.initiator if cfg.initiator is not None else select_initiator(mesh, faults.faulty, 0)
    return run_reconfiguration(topology, None, initiator, start_clock=0)


def make_traffic(cfg: ExperimentConfig, topology: MeshTopology, rate: float, seed: int):
    if cfg.traffic.pattern == TrafficPattern.TRACE:
        return TraceReplay(load_trace(cfg.traffic.trace_file, topology.n_nodes))
    traffic_cfg = cfg.traffic.model_copy(update={"rate": rate, "seed": seed})
    return SyntheticTraffic(traffic_cfg, topology)


class Simulation:
    """A network, its traffic source and the measurement bookkeeping."""

    def __init__(
        self,
        cfg: ExperimentConfig,
        rate: float,
        seed: int,
        window: tuple[int, int],
        events: Optional[EventTrace] = None,
    ):
        self.cfg = cfg
        self.rate = rate
        self.seed = seed
        self.window = window
        topology, self.faults = build_scenario(cfg, seed)
        self.outcome = initial_reconfiguration(cfg, topology, self.faults)
        self.network: Network = build_network(
            topology, self.outcome, cfg.variant, cfg.vcs,
            buffer_depth=cfg.buffer_depth, seed=seed, events=events,
        )
        self.traffic = make_traffic(cfg, topology, rate, seed)
        self.network.on_eject = self._on_eject
        self.network.on_drop = self._on_drop
        self.fault_events: list[tuple[int, FaultSet]] = []
        mesh = build_mesh(cfg.kx, cfg.ky)
        base = self.faults
        for i, event in enumerate(sorted(cfg.fault_events, key=lambda e: e.cycle)):
            faults = event_faults(cfg, event, mesh, base, seed + EVENT_SEED_OFFSET * (i + 1))
            self.schedule_fault(event.cycle, faults)
            base = victimize_bidirectional(faults, mesh)
        self.delivered: list[Packet] = []
        self.measured_created = 0
        self.measured_dropped = 0
        self.window_flits_start: Optional[int] = None
        self.window_flits_end: Optional[int] = None

    def _in_window(self, p: Packet) -> bool:
        return self.window[0] <= p.created_cycle < self.window[1]

    def _on_eject(self, p: Packet):
        if p.trace_id is not None:
            self.traffic.complete(p.trace_id)
        if self._in_window(p):
            self.delivered.append(p)

    def _on_drop(self, p: Packet):
        if p.trace_id is not None:
            self.traffic.complete(p.trace_id)
        if self._in_window(p):
            self.measured_dropped += 1

    def schedule_fault(self, cycle: int, faults: FaultSet):
        self.fault_events.append((cycle, faults))
        self.fault_events.sort(key=lambda e: e[0])

    def advance(self, cycles: int, generate: bool = True):
        network = self.network
        horizon = self.cfg.watchdog_horizon
        for _ in range(cycles):
            t = network.cycle
            if t == self.window[0]:
                self.window_flits_start = network.stats.flits_delivered
            if t == self.window[1]:
                self.window_flits_end = network.stats.flits_delivered
            while self.fault_events and self.fault_events[0][0] == t:
                _, faults = self.fault_events.pop(0)
                network.freeze_and_reconfigure(faults)
            if generate:
                for request in self.traffic.generate(t):
                    if self.window[0] <= t < self.window[1]:
                        self.measured_created += 1
                    network.inject(request)
            network.step()
            if network.cycle % WATCHDOG_CHECK_EVERY == 0:
                report = network.watchdog_check(horizon)
                if report is not None:
                    logger.error("watchdog fired (seed=%d, rate=%s): %s", self.seed, self.rate, report)
                    raise DeadlockDetected(report)
        if network.cycle == self.window[1] and self.window_flits_end is None:
            self.window_flits_end = network.stats.flits_delivered

    def drain(self, max_cycles: int):
        """Keep stepping without new traffic until measured packets are out."""
        for _ in range(max_cycles):
            if len(self.delivered) + self.measured_dropped >= self.measured_created:
                return
            self.advance(1, generate=False)

    def metrics(self) -> MetricsRecord:
        cfg = self.cfg
        latencies = [p.latency for p in self.delivered]
        measure = self.window[1] - self.window[0]
        start = self.window_flits_start or 0
        end = self.window_flits_end if self.window_flits_end is not None else self.network.stats.flits_delivered
        drops = self.network.stats.drops
        expected = self.measured_created - self.measured_dropped
        return MetricsRecord(
            variant=cfg.variant,
            vcs=cfg.vcs,
            fault_count=configured_fault_count(cfg),
            placement=cfg.placement,
            pattern=cfg.traffic.pattern,
            rate=self.rate,
            seed=self.seed,
            avg_latency=math.fsum(latencies) / len(latencies) if latencies else None,
            accepted_throughput=(end - start) / (self.network.topology.n_nodes * measure),
            drop_count=sum(drops.values()),
            dropped_unreachable=drops[DropReason.UNREACHABLE],
            dropped_severed=drops[DropReason.SEVERED],
            packets_measured=self.measured_created,
            packets_delivered=len(self.delivered),
            completed_fraction=len(self.delivered) / expected if expected > 0 else 1.0,
            avg_hops=math.fsum(p.hops for p in self.delivered) / len(self.delivered) if self.delivered else None,
            ud_fraction=sum(p.switched_to_ud for p in self.delivered) / len(self.delivered) if self.delivered else 0.0,
            max_queue_depth=max(ni.max_depth for ni in self.network.nis),
            link_flits={
                str(UniLink(node, Direction(port))): count
                for (node, port), count in sorted(self.network.stats.link_flits.items())
            },
        )


def run_point(cfg: ExperimentConfig, rate: float, seed: int, events: Optional[EventTrace] = None) -> MetricsRecord:
    """
    Simulate one (rate, seed) point.

    Raises:
        DeadlockDetected: the watchdog found flits that stopped moving.
    """
    start = cfg.warmup_cycles
    end = start + cfg.measure_cycles
    sim = Simulation(cfg, rate, seed, (start, end), events=events)
    sim.advance(end)
    sim.drain(cfg.drain_cycles)
    record = sim.metrics()
    logger.info(
        "point %s rate=%s seed=%d: latency=%s throughput=%.4f drops=%d",
        cfg.variant.value, rate, seed, record.avg_latency, record.accepted_throughput, record.drop_count,
    )
    return record


def _run_point_task(args) -> MetricsRecord:
    cfg, rate, seed = args
    return run_point(cfg, rate, seed)


def run_points(cfg: ExperimentConfig, tasks: list[tuple[float, int]], progress: bool = False) -> list[MetricsRecord]:
    """Run (rate, seed) points, in a process pool when ``cfg.workers`` > 1; results keep task order."""
    payload = [(cfg, rate, seed) for rate, seed in tasks]
    with tqdm(total=len(payload), disable=not progress, desc="points") as bar:
        if cfg.workers > 1 and len(payload) > 1:
            results = []
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                for record in pool.map(_run_point_task, payload):
                    results.append(record)
                    bar.update(1)
            return results
        results = []
        for item in payload:
            results.append(_run_point_task(item))
            bar.update(1)
        return results


def _mean(values: Iterable[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return math.fsum(present) / len(present) if present else None


def zero_load_latency(cfg: ExperimentConfig) -> float:
    """Mean latency over seeds at 0.01 flits/node/cycle."""
    records = run_points(cfg, [(ZERO_LOAD_RATE, seed) for seed in cfg.seeds])
    latency = _mean(r.avg_latency for r in records)
    if latency is None:
        raise ConfigurationError("no packet was delivered at zero load; lengthen measure_cycles")
    return latency


def saturation_throughput(cfg: ExperimentConfig, zero_load: Optional[float] = None) -> SaturationResult:
    """Bisect the offered rate until mean latency crosses three times zero-load latency."""
    zl = zero_load if zero_load is not None else zero_load_latency(cfg)
    threshold = SATURATION_FACTOR * zl
    trials: list[list[Optional[float]]] = []

    def saturated(rate: float) -> bool:
        records = run_points(cfg, [(rate, seed) for seed in cfg.seeds])
        latency = _mean(r.avg_latency for r in records)
        trials.append([rate, latency])
        if latency is None or latency > threshold:
            return True
        return min(r.completed_fraction for r in records) < MIN_COMPLETED_FRACTION

    if not saturated(1.0):
        logger.warning("no saturation up to 1.0 flits/node/cycle; reporting the ceiling")
        return SaturationResult(zero_load_latency=zl, threshold=threshold, saturation_rate=1.0,
                                ceiling_reached=True, trials=trials)
    lo, hi = 0.0, 1.0
    for _ in range(SATURATION_ITERATIONS):
        mid = (lo + hi) / 2
        if saturated(mid):
            hi = mid
        else:
            lo = mid
    logger.info("saturation for %s: %.4f flits/node/cycle", cfg.variant.value, lo)
    return SaturationResult(zero_load_latency=zl, threshold=threshold, saturation_rate=lo, trials=trials)


def latency_bins(
    packets: Iterable[Packet], end_cycle: int, bin_cycles: int, freezes: Sequence[int] = (),
) -> list[LatencyBin]:
    """
    Mean latency per bin, keyed by creation cycle.

    A packet created before a freeze and still in the network when it began
    belongs to the bin of that freeze, so bins before a fault event only hold
    packets the event did not touch.
    """
    n_bins = math.ceil(end_cycle / bin_cycles)
    sums = [[] for _ in range(n_bins)]
    freezes = sorted(freezes)
    for p in packets:
        keyed = p.created_cycle
        for freeze in freezes:
            if p.created_cycle < freeze <= p.ejected_cycle:
                keyed = freeze
                break
        index = keyed // bin_cycles
        if 0 <= index < n_bins:
            sums[index].append(p.latency)
    return [
        LatencyBin(start_cycle=i * bin_cycles,
                   avg_latency=math.fsum(values) / len(values) if values else None,
                   packets=len(values))
        for i, values in enumerate(sums)
    ]


def stabilization_time(bins: list[LatencyBin], resume_cycle: int, bin_cycles: int) -> tuple[Optional[float], Optional[int]]:
    """
    Post-recovery steady latency and the cycles after resume until it holds.

    Steady latency is the median of the last quarter of post-resume bins; the
    network counts as stable from the first bin after which every bin stays
    within 25% of it.
    """
    first = resume_cycle - resume_cycle % bin_cycles
    after = [b for b in bins if b.start_cycle >= first]
    values = [b.avg_latency for b in after if b.avg_latency is not None]
    if not values:
        return None, None
    tail = values[-max(1, len(values) // 4):]
    steady = statistics.median(tail)
    stable_from = None
    for i, b in enumerate(after):
        if all(x.avg_latency is not None and x.avg_latency <= STABLE_BAND * steady for x in after[i:]):
            stable_from = b.start_cycle
            break
    if stable_from is None:
        return steady, None
    return steady, max(0, stable_from - resume_cycle)


def dynamic_fault_experiment(cfg: ExperimentConfig, seed: Optional[int] = None) -> DynamicSeries:
    """
    Stable phase, then ``cfg.dynamic_faults`` concurrent link faults at
    ``cfg.dynamic_fault_cycle``, a frozen reconfiguration epoch and a recovery
    phase, reported as latency per ``cfg.bin_cycles`` bin.
    """
    seed = cfg.seeds[0] if seed is None else seed
    fault_cycle = cfg.dynamic_fault_cycle
    n = cfg.n_nodes
    end = fault_cycle + n * n + cfg.dynamic_post_cycles
    sim = Simulation(cfg, cfg.traffic.rate, seed, (0, end))
    base = FaultSet(sim.network.topology.faulty, cfg.placement, seed)
    new_faults = inject_random_faults(
        build_mesh(cfg.kx, cfg.ky), cfg.dynamic_faults, seed + DYNAMIC_SEED_OFFSET,
        cfg.require_connected, base=base,
    )
    sim.schedule_fault(fault_cycle, new_faults)
    sim.advance(end)
    sim.drain(cfg.drain_cycles)

    freezes = [outcome.start_clock for outcome in sim.network.reconfigurations]
    resume = fault_cycle + n * n
    for outcome in sim.network.reconfigurations:
        # a later event inside the epoch restarts it
        if fault_cycle < outcome.start_clock < resume:
            resume = outcome.resume_clock
    bins = latency_bins(sim.delivered, end, cfg.bin_cycles, freezes)
    pre = [b.avg_latency for b in bins if fault_cycle // 2 <= b.start_cycle and b.start_cycle + cfg.bin_cycles <= fault_cycle]
    steady, stabilization = stabilization_time(bins, resume, cfg.bin_cycles)
    drops = sim.network.stats.drops
    series = DynamicSeries(
        variant=cfg.variant,
        seed=seed,
        fault_cycle=fault_cycle,
        resume_cycle=resume,
        bin_cycles=cfg.bin_cycles,
        bins=bins,
        pre_fault_latency=_mean(pre),
        post_fault_latency=steady,
        stabilization_cycles=stabilization,
        dropped_unreachable=drops[DropReason.UNREACHABLE],
        dropped_severed=drops[DropReason.SEVERED],
    )
    logger.info(
        "dynamic run %s seed=%d: resume at %d, stabilized after %s cycles",
        cfg.variant.value, seed, resume, stabilization,
    )
    return series


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def record_values(record: MetricsRecord) -> dict:
    """Flat values of one result row; the keys are the stored result columns."""
    return {
        "variant": record.variant.value,
        "vcs": record.vcs,
        "fault_count": record.fault_count,
        "placement": record.placement.value,
        "pattern": record.pattern.value,
        "rate": record.rate,
        "seed": str(record.seed),
        "avg_latency": record.avg_latency,
        "throughput": record.accepted_throughput,
        "drops": record.drop_count,
        "avg_hops": record.avg_hops,
        "ud_fraction": record.ud_fraction,
    }


def aggregate_values(records: list[MetricsRecord]) -> dict:
    """Mean over seeds of one rate's records, seed ``mean``."""
    values = record_values(records[0])
    values.update(
        seed="mean",
        avg_latency=_mean(r.avg_latency for r in records),
        throughput=math.fsum(r.accepted_throughput for r in records) / len(records),
        drops=math.fsum(r.drop_count for r in records) / len(records),
        avg_hops=_mean(r.avg_hops for r in records),
        ud_fraction=math.fsum(r.ud_fraction for r in records) / len(records),
    )
    return values


def csv_row(values: dict) -> list[str]:
    drops = values["drops"]
    return [
        values["variant"], str(values["vcs"]), str(values["fault_count"]), values["placement"],
        values["pattern"], repr(float(values["rate"])), values["seed"], _fmt(values["avg_latency"]),
        repr(float(values["throughput"])),
        repr(float(drops)) if values["seed"] == "mean" else str(int(drops)),
    ]


def record_row(record: MetricsRecord) -> list[str]:
    return csv_row(record_values(record))


def aggregate_row(records: list[MetricsRecord]) -> list[str]:
    return csv_row(aggregate_values(records))


def seed_groups(records: list[MetricsRecord]) -> list[list[MetricsRecord]]:
    """Records grouped per rate in rate order, each group sorted by seed."""
    return [
        sorted((r for r in records if r.rate == rate), key=lambda r: r.seed)
        for rate in sorted(set(r.rate for r in records))
    ]


def sweep_rows(cfg: ExperimentConfig, records: list[MetricsRecord]) -> list[list[str]]:
    rows = []
    for group in seed_groups(records):
        rows.extend(record_row(r) for r in group)
        rows.append(aggregate_row(group))
    return rows


def write_link_loads(record: MetricsRecord, out: str | Path):
    """Per-link flit counts of one point as ``link,flits`` rows."""
    with open(out, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["link", "flits"])
        writer.writerows(record.link_flits.items())


def write_csv(rows: list[list[str]], out: str | Path | TextIO):
    """Write the header and rows to a path or an open text stream."""
    if hasattr(out, "write"):
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(rows)
        return
    with open(out, "w", newline="") as f:
        write_csv(rows, f)


def sweep_and_emit(cfg: ExperimentConfig, out_path: str | Path, progress: bool = False) -> list[MetricsRecord]:
    """Run every rate x seed point and write the sweep CSV, one mean row per rate."""
    tasks = [(rate, seed) for rate in sorted(set(cfg.rates)) for seed in sorted(set(cfg.seeds))]
    records = run_points(cfg, tasks, progress=progress)
    write_csv(sweep_rows(cfg, records), out_path)
    logger.info("wrote %d points to %s", len(records), out_path)
    return records
