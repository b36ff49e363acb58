"""
Traffic generation: synthetic Bernoulli sources and dependency-tracked traces.

Trace files hold one packet per line:

    id src_index dst_index size_flits earliest_cycle [dep_id ...]

with ``#`` starting a comment. A packet becomes eligible once every packet it
depends on has left the network (ejected or dropped) and the clock has
reached its earliest cycle.
"""

import heapq
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Optional

import networkx as nx
import numpy as np

from noc.errors import ConfigurationError, TraceLoadError
from noc.topology import MeshTopology

if TYPE_CHECKING:
    from schemas.experiments import TrafficConfig

logger = logging.getLogger(__name__)

FLIT_WIDTH_BITS = 128


class TrafficPattern(str, Enum):
    UNIFORM = "uniform"
    TRANSPOSE = "transpose"
    TRACE = "trace"


@dataclass(frozen=True, slots=True)
class PacketRequest:
    src: int
    dst: int
    size_flits: int
    created_cycle: int
    trace_id: Optional[int] = None


@dataclass(frozen=True)
class TraceRecord:
    packet_id: int
    src: int
    dst: int
    size_flits: int
    earliest_cycle: int
    deps: tuple[int, ...] = ()
    line_no: int = 0


@dataclass
class TraceSchedule:
    records: list[TraceRecord] = field(default_factory=list)
    index: dict[int, TraceRecord] = field(default_factory=dict)
    dependents: dict[int, list[int]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def sizes(self) -> set[int]:
        return {r.size_flits for r in self.records}


def flits_for_bits(bits: int, flit_width: int = FLIT_WIDTH_BITS) -> int:
    """Flits needed to carry a message of ``bits`` bits."""
    if bits <= 0:
        raise ConfigurationError("message size must be positive")
    return math.ceil(bits / flit_width)


def node_rng(seed: int, node: int) -> np.random.Generator:
    """Independent stream per (seed, node)."""
    return np.random.default_rng([seed, node])


def injection_probability(cfg: "TrafficConfig") -> float:
    return cfg.rate / cfg.packet_size_flits


def gen_uniform(cfg: "TrafficConfig", mesh: MeshTopology, node: int, cycle: int, rng: np.random.Generator) -> Optional[PacketRequest]:
    if rng.random() >= injection_probability(cfg) or mesh.n_nodes < 2:
        return None
    dst = int(rng.integers(mesh.n_nodes - 1))
    if dst >= node:
        dst += 1
    return PacketRequest(node, dst, cfg.packet_size_flits, cycle)


def transpose_destination(mesh: MeshTopology, node: int) -> Optional[int]:
    if mesh.kx != mesh.ky:
        raise ConfigurationError(f"transpose traffic needs a square mesh, got {mesh.kx}x{mesh.ky}")
    x, y = mesh.coords(node)
    if x == y:
        return None
    return mesh.node_at(y, x)


def gen_transpose(cfg: "TrafficConfig", mesh: MeshTopology, node: int, cycle: int, rng: np.random.Generator) -> Optional[PacketRequest]:
    dst = transpose_destination(mesh, node)
    if dst is None:
        return None
    if rng.random() >= injection_probability(cfg):
        return None
    return PacketRequest(node, dst, cfg.packet_size_flits, cycle)


GENERATORS: dict[TrafficPattern, Callable] = {
    TrafficPattern.UNIFORM: gen_uniform,
    TrafficPattern.TRANSPOSE: gen_transpose,
}


class SyntheticTraffic:
    """One Bernoulli source per node."""

    def __init__(self, cfg: "TrafficConfig", mesh: MeshTopology):
        if cfg.pattern not in GENERATORS:
            raise ConfigurationError(f"{cfg.pattern.value} is not a synthetic pattern")
        if cfg.pattern == TrafficPattern.TRANSPOSE:
            transpose_destination(mesh, 0)
        self.cfg = cfg
        self.mesh = mesh
        self._gen = GENERATORS[cfg.pattern]
        self._rngs = [node_rng(cfg.seed, node) for node in range(mesh.n_nodes)]

    def generate(self, cycle: int) -> list[PacketRequest]:
        if self.cfg.rate <= 0:
            return []
        out = []
        for node, rng in enumerate(self._rngs):
            request = self._gen(self.cfg, self.mesh, node, cycle, rng)
            if request is not None:
                out.append(request)
        return out

    def complete(self, trace_id: int):
        pass

    @property
    def exhausted(self) -> bool:
        return False


def _parse_int(token: str, what: str, line_no: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise TraceLoadError(f"{what} must be an integer, got {token!r}", line_no) from None


def parse_trace(text: str, n_nodes: Optional[int] = None) -> TraceSchedule:
    schedule = TraceSchedule()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) < 5:
            raise TraceLoadError(f"expected 'id src dst size earliest [deps]', got {raw.strip()!r}", line_no)
        packet_id, src, dst, size, earliest = (
            _parse_int(tok, name, line_no)
            for tok, name in zip(tokens[:5], ("id", "src", "dst", "size", "earliest cycle"))
        )
        deps = tuple(_parse_int(tok, "dependency id", line_no) for tok in tokens[5:])
        if packet_id in schedule.index:
            raise TraceLoadError(f"duplicate packet id {packet_id}", line_no)
        if size < 1:
            raise TraceLoadError(f"packet {packet_id} has size {size}", line_no)
        if earliest < 0:
            raise TraceLoadError(f"packet {packet_id} has negative earliest cycle", line_no)
        if n_nodes is not None:
            for node in (src, dst):
                if not 0 <= node < n_nodes:
                    raise TraceLoadError(f"node {node} outside a {n_nodes}-node mesh", line_no)
        elif src < 0 or dst < 0:
            raise TraceLoadError("node indices must be non-negative", line_no)
        record = TraceRecord(packet_id, src, dst, size, earliest, deps, line_no)
        schedule.records.append(record)
        schedule.index[packet_id] = record

    graph = nx.DiGraph()
    graph.add_nodes_from(schedule.index)
    for record in schedule.records:
        for dep in dict.fromkeys(record.deps):
            if dep not in schedule.index:
                raise TraceLoadError(f"packet {record.packet_id} depends on unknown packet {dep}", record.line_no)
            graph.add_edge(dep, record.packet_id)
            schedule.dependents.setdefault(dep, []).append(record.packet_id)
    try:
        cycle = nx.find_cycle(graph)
    except nx.NetworkXNoCycle:
        return schedule
    first = schedule.index[cycle[0][1]]
    raise TraceLoadError(
        "dependency cycle through packets " + " -> ".join(str(u) for u, _ in cycle), first.line_no
    )


def load_trace(path: str | Path, n_nodes: Optional[int] = None) -> TraceSchedule:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise TraceLoadError(f"cannot read trace {path}: {e}") from e
    schedule = parse_trace(text, n_nodes)
    logger.info("loaded trace %s: %d packets", path, len(schedule))
    return schedule


class TraceReplay:
    """Releases trace packets once their dependencies have completed."""

    def __init__(self, schedule: TraceSchedule):
        self.schedule = schedule
        self._waiting = {r.packet_id: len(set(r.deps)) for r in schedule.records}
        self._ready: list[tuple[int, int]] = []
        self._released = 0
        self._completed: set[int] = set()
        for record in schedule.records:
            if not record.deps:
                heapq.heappush(self._ready, (record.earliest_cycle, record.packet_id))

    def generate(self, cycle: int) -> list[PacketRequest]:
        out = []
        while self._ready and self._ready[0][0] <= cycle:
            _, packet_id = heapq.heappop(self._ready)
            record = self.schedule.index[packet_id]
            out.append(PacketRequest(record.src, record.dst, record.size_flits, cycle, packet_id))
            self._released += 1
        return out

    def complete(self, trace_id: int):
        """Mark a packet as ejected (or dropped) and wake its dependents."""
        if trace_id in self._completed:
            return
        self._completed.add(trace_id)
        for child in self.schedule.dependents.get(trace_id, ()):
            self._waiting[child] -= 1
            if self._waiting[child] == 0:
                record = self.schedule.index[child]
                heapq.heappush(self._ready, (record.earliest_cycle, child))

    @property
    def exhausted(self) -> bool:
        return len(self._completed) == len(self.schedule)
