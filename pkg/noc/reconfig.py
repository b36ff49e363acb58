"""
Distributed reconfiguration: DRF/AF flag broadcast and Up*/Down* table fill.

An epoch lasts N^2 control cycles and is split into N windows of N cycles.
Each window belongs to one broadcasting root; the window counter is loaded
so the initiator's window comes first and the others follow in modulo order.

Actions per node:
    1. invalidate the routing table (epoch start)
    2. enter Recovering and clear the alert register on the first DRF
    3. mark ports Up/Down on the first DRF of the epoch
    4. record the ports through which the current root's DRF first arrived
    5. forward the flag, DRF over healthy links and AF over faulty ones

The flag wires are modeled as a fault-free overlay with one-cycle hops.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import networkx as nx

from noc.errors import ProtocolError
from noc.topology import DIRECTIONS, Direction, FaultSet, MeshTopology

logger = logging.getLogger(__name__)


class StatusRegister(str, Enum):
    NORMAL = "normal"
    RECOVERING = "recovering"


class AlertRegister(str, Enum):
    NORMAL = "normal"
    ALERT = "alert"


class PortMark(str, Enum):
    UNMARKED = "-"
    UP = "U"
    DOWN = "D"


class Flag(str, Enum):
    DRF = "drf"
    AF = "af"


@dataclass
class RouterCtrlState:
    node: int
    sr: StatusRegister = StatusRegister.NORMAL
    ar: AlertRegister = AlertRegister.NORMAL
    port_mark: list[PortMark] = field(default_factory=lambda: [PortMark.UNMARKED] * 4)
    drf_received_port_history: set[Direction] = field(default_factory=set)
    window_first_drf_cycle: int | None = None
    # the window's first DRF came in through an Up port (it travelled down the tree)
    descending: bool = False

    def reset_window(self):
        self.drf_received_port_history = set()
        self.window_first_drf_cycle = None
        self.descending = False


@dataclass
class RoutingTable:
    owner: int
    entries: list[frozenset[Direction]]
    valid: bool = False

    @classmethod
    def empty(cls, owner: int, n_nodes: int) -> "RoutingTable":
        return cls(owner, [frozenset()] * n_nodes)

    def invalidate(self):
        self.entries = [frozenset()] * len(self.entries)
        self.valid = False

    def entry(self, dst: int) -> frozenset[Direction]:
        return self.entries[dst]

    def mask(self, dst: int) -> int:
        """4-bit encoding of an entry, bit i set for Direction(i)."""
        return sum(1 << d for d in self.entries[dst])

    def reaches(self, dst: int) -> bool:
        return dst == self.owner or bool(self.entries[dst])


@dataclass(frozen=True)
class WindowSummary:
    root: int
    scan_depth: int
    # nodes left in Alert without a DRF from this root: outside its partition
    isolated: frozenset[int]


@dataclass(frozen=True)
class ReconfigOutcome:
    tables: tuple[RoutingTable, ...]
    marks: tuple[tuple[PortMark, ...], ...]
    partitions: dict[int, int]
    duration_cycles: int
    initiator: int
    start_clock: int
    alerted: frozenset[int]
    border_links: frozenset[tuple[int, int]]
    windows: tuple[WindowSummary, ...]

    @property
    def resume_clock(self) -> int:
        return self.start_clock + self.duration_cycles

    def partition_sets(self) -> list[frozenset[int]]:
        groups: dict[int, set[int]] = {}
        for node, label in self.partitions.items():
            groups.setdefault(label, set()).add(node)
        return [frozenset(groups[label]) for label in sorted(groups)]


def extract_root_schedule(global_clock: int, n_nodes: int) -> tuple[int, int]:
    """Split the clock into (broadcasting root, cycle inside its window)."""
    return (global_clock // n_nodes) % n_nodes, global_clock % n_nodes


def schedule_clock(initiator: int, start_clock: int, clock: int, n_nodes: int) -> int:
    """Window counter value at ``clock`` for an epoch that began at ``start_clock``."""
    return initiator * n_nodes + (clock - start_clock)


def select_initiator(t: MeshTopology, new_faults: Iterable, global_clock: int) -> int:
    """
    Pick the root for concurrently detected faults.

    The first fault-adjacent node in cyclic order, starting from the root the
    global clock designates, becomes the initiator.
    """
    n = t.n_nodes
    adjacent = set()
    for link in new_faults:
        adjacent.add(link.src)
        nb = t.neighbor(link.src, link.dir)
        if nb is not None:
            adjacent.add(nb)
    clock_root, _ = extract_root_schedule(global_clock, n)
    if not adjacent:
        return clock_root
    return min(adjacent, key=lambda node: (node - clock_root) % n)


def _orient(states: Sequence[RouterCtrlState], t: MeshTopology, closer: int, farther: int):
    d = t.direction_to(farther, closer)
    if states[farther].port_mark[d] != PortMark.UNMARKED or states[closer].port_mark[d.opposite] != PortMark.UNMARKED:
        raise ProtocolError(f"link {closer}-{farther} is already marked")
    states[farther].port_mark[d] = PortMark.UP
    states[closer].port_mark[d.opposite] = PortMark.DOWN


def mark_link(receiver: RouterCtrlState, in_port: Direction, sender: RouterCtrlState):
    """Action 3: the receiver's input port becomes Up, the sender's output port Down."""
    if receiver.port_mark[in_port] != PortMark.UNMARKED:
        raise ProtocolError(f"node {receiver.node} port {in_port.letter} is already marked")
    if sender.port_mark[in_port.opposite] != PortMark.UNMARKED:
        raise ProtocolError(f"node {sender.node} port {in_port.opposite.letter} is already marked")
    receiver.port_mark[in_port] = PortMark.UP
    sender.port_mark[in_port.opposite] = PortMark.DOWN


def update_routing_table(table: RoutingTable, root: int, in_ports: Iterable[Direction]) -> frozenset[Direction]:
    """Action 4: remember every port the root's DRF arrived on in its first arrival cycle."""
    if table.entries[root]:
        raise ProtocolError(f"node {table.owner} already holds an entry for root {root}")
    ports = frozenset(in_ports)
    table.entries[root] = ports
    return ports


class ControlNetwork:
    """Router control state and flag wires for one mesh."""

    def __init__(self, topology: MeshTopology):
        self.topology = topology
        self.n_nodes = topology.n_nodes
        self.states = [RouterCtrlState(node) for node in range(self.n_nodes)]
        self.tables = [RoutingTable.empty(node, self.n_nodes) for node in range(self.n_nodes)]
        self.frontier: list[int] = []
        self.af_crossings: set[tuple[int, int]] = set()
        self._window_depth = 0

    def begin_epoch(self):
        for state in self.states:
            state.port_mark = [PortMark.UNMARKED] * 4
            state.ar = AlertRegister.NORMAL
            state.sr = StatusRegister.NORMAL
            state.reset_window()
        for table in self.tables:
            table.invalidate()
        self.af_crossings = set()

    def enter_recovery(self, node: int):
        state = self.states[node]
        state.sr = StatusRegister.RECOVERING
        state.ar = AlertRegister.NORMAL
        self.tables[node].valid = False

    def begin_window(self, root: int):
        for state in self.states:
            state.reset_window()
        root_state = self.states[root]
        if root_state.sr == StatusRegister.NORMAL:
            if root_state.ar == AlertRegister.ALERT:
                logger.debug("root %d starts its window in alert: new partition", root)
            self.enter_recovery(root)
        root_state.window_first_drf_cycle = 0
        self.frontier = [root]
        self._window_depth = 0

    def end_window(self, root: int) -> WindowSummary:
        isolated = frozenset(
            s.node for s in self.states
            if s.ar == AlertRegister.ALERT and s.sr == StatusRegister.NORMAL
        )
        if isolated:
            logger.debug("window %d: nodes %s flagged outside the root's partition", root, sorted(isolated))
        self.frontier = []
        return WindowSummary(root, self._window_depth, isolated)

    def end_epoch(self):
        for state in self.states:
            state.sr = StatusRegister.NORMAL
        for table in self.tables:
            table.valid = True


def step_broadcast_cycle(ctrl: ControlNetwork, root: int, cycle_in_window: int) -> ControlNetwork:
    """
    Advance the flag wires by one control cycle.

    Nodes whose first DRF of the window arrived at ``cycle_in_window`` (the
    root at cycle 0) send once: DRF on healthy ports, AF on faulty ones, never
    on a port a flag already came in through. A DRF that came down the tree
    is not forwarded up again. All sends of the cycle land together, stamped
    ``cycle_in_window + 1``.
    """
    t = ctrl.topology
    states = ctrl.states
    sends: list[tuple[int, Direction, Flag]] = []
    for v in ctrl.frontier:
        sender = states[v]
        if sender.window_first_drf_cycle != cycle_in_window:
            raise ProtocolError(f"node {v} is not due to send at cycle {cycle_in_window}")
        for d in DIRECTIONS:
            if not t.has_port(v, d) or d in sender.drf_received_port_history:
                continue
            if not t.is_healthy(v, d):
                sends.append((v, d, Flag.AF))
            elif not (sender.descending and sender.port_mark[d] == PortMark.UP):
                sends.append((v, d, Flag.DRF))

    if not sends:
        ctrl.frontier = []
        return ctrl

    stamp = cycle_in_window + 1
    arrivals: dict[int, list[tuple[Direction, int]]] = {}
    for v, d, flag in sends:
        w = t.neighbor(v, d)
        in_port = d.opposite
        receiver = states[w]
        receiver.drf_received_port_history.add(in_port)
        if flag == Flag.AF:
            ctrl.af_crossings.add((min(v, w), max(v, w)))
            if receiver.sr != StatusRegister.RECOVERING:
                receiver.ar = AlertRegister.ALERT
            continue
        arrivals.setdefault(w, []).append((in_port, v))

    next_frontier = []
    for w in sorted(arrivals):
        receiver = states[w]
        if receiver.window_first_drf_cycle is not None:
            # a later arrival only blocks the port for the rest of the window
            for in_port, v in arrivals[w]:
                if receiver.port_mark[in_port] == PortMark.UNMARKED:
                    _orient(states, t, closer=w, farther=v)
            continue
        first_in_epoch = receiver.sr == StatusRegister.NORMAL
        if first_in_epoch:
            ctrl.enter_recovery(w)
        for in_port, v in arrivals[w]:
            if receiver.port_mark[in_port] != PortMark.UNMARKED:
                continue
            if not first_in_epoch:
                raise ProtocolError(f"DRF crossed unmarked link {v}-{w} after marking")
            mark_link(receiver, in_port, states[v])
        receiver.window_first_drf_cycle = stamp
        in_ports = [in_port for in_port, _ in arrivals[w]]
        receiver.descending = any(receiver.port_mark[p] == PortMark.UP for p in in_ports)
        update_routing_table(ctrl.tables[w], root, in_ports)
        next_frontier.append(w)

    if next_frontier:
        ctrl._window_depth = stamp
    ctrl.frontier = next_frontier
    return ctrl


def detect_partitions(tables: Sequence[RoutingTable]) -> dict[int, int]:
    """Group nodes that hold table entries for each other; label by smallest id."""
    graph = nx.Graph()
    graph.add_nodes_from(range(len(tables)))
    for a, table in enumerate(tables):
        for b in range(a + 1, len(tables)):
            if table.entries[b] and tables[b].entries[a]:
                graph.add_edge(a, b)
    labels = {}
    for component in nx.connected_components(graph):
        label = min(component)
        for node in component:
            labels[node] = label
    return labels


def run_reconfiguration(
    t: MeshTopology,
    f: FaultSet | None,
    initiator: int,
    start_clock: int = 0,
) -> ReconfigOutcome:
    """
    Run one full N^2-cycle epoch and return the resulting tables.

    Args:
        t: the mesh, possibly carrying faults already
        f: additional faults to apply before the epoch
        initiator: node whose window opens the epoch
        start_clock: global clock at the start of the epoch
    """
    topology = t.with_faults(f) if f is not None else t
    n = topology.n_nodes
    ctrl = ControlNetwork(topology)
    ctrl.begin_epoch()

    duration = n * n
    windows = []
    alerted = frozenset()
    root = None
    for clock in range(start_clock, start_clock + duration):
        window_root, cycle = extract_root_schedule(schedule_clock(initiator, start_clock, clock, n), n)
        if cycle == 0:
            root = window_root
            ctrl.begin_window(root)
        if ctrl.frontier:
            step_broadcast_cycle(ctrl, root, cycle)
        if cycle == n - 1:
            windows.append(ctrl.end_window(root))
            if len(windows) == 1:
                alerted = frozenset(s.node for s in ctrl.states if s.ar == AlertRegister.ALERT)
    ctrl.end_epoch()

    partitions = detect_partitions(ctrl.tables)
    borders = frozenset(
        (a, b) for a, b in ctrl.af_crossings if partitions[a] != partitions[b]
    )
    outcome = ReconfigOutcome(
        tables=tuple(ctrl.tables),
        marks=tuple(tuple(s.port_mark) for s in ctrl.states),
        partitions=partitions,
        duration_cycles=duration,
        initiator=initiator,
        start_clock=start_clock,
        alerted=alerted,
        border_links=borders,
        windows=tuple(windows),
    )
    logger.info(
        "reconfiguration: initiator %d, cycles %d-%d, %d partition(s)",
        initiator, start_clock, outcome.resume_clock, len(set(partitions.values())),
    )
    return outcome


def oracle_port_marks(t: MeshTopology, first_root: int) -> list[list[PortMark]]:
    """Offline Up*/Down* marking: BFS from the first scheduled root of each component."""
    n = t.n_nodes
    graph = t.healthy_graph()
    depth: dict[int, int] = {}
    for offset in range(n):
        root = (first_root + offset) % n
        if root in depth:
            continue
        depth.update(nx.single_source_shortest_path_length(graph, root))

    marks = [[PortMark.UNMARKED] * 4 for _ in range(n)]
    for a, b in graph.edges():
        if (depth[a], a) > (depth[b], b):
            a, b = b, a
        # a is closer to the root; equal depth falls back to the lower id
        d = t.direction_to(b, a)
        marks[b][d] = PortMark.UP
        marks[a][d.opposite] = PortMark.DOWN
    return marks


def oracle_ud_routes(t: MeshTopology, f: FaultSet | None, first_root: int) -> list[RoutingTable]:
    """
    Tables computed offline from the BFS marking.

    For each destination the flag spread is relaxed layer by layer until no
    node changes: a node forwards once, in the layer after it was first
    reached, never back through a port it was reached on and never up the
    tree once the flag has come down. A node's entry lists the ports it was
    first reached through.
    """
    topology = t.with_faults(f) if f is not None else t
    n = topology.n_nodes
    marks = oracle_port_marks(topology, first_root)
    tables = [RoutingTable.empty(node, n) for node in range(n)]

    for root in range(n):
        reached = {root}
        descending = {root: False}
        entries: dict[int, frozenset[Direction]] = {root: frozenset()}
        layer = [root]
        while layer:
            incoming: dict[int, set[Direction]] = {}
            for w in layer:
                for d in topology.healthy_ports(w):
                    if d in entries[w]:
                        continue
                    if descending[w] and marks[w][d] == PortMark.UP:
                        continue
                    x = topology.neighbor(w, d)
                    if x not in reached:
                        incoming.setdefault(x, set()).add(d.opposite)
            for x, ports in incoming.items():
                reached.add(x)
                entries[x] = frozenset(ports)
                descending[x] = any(marks[x][p] == PortMark.UP for p in ports)
            layer = sorted(incoming)
        for node, ports in entries.items():
            if node != root:
                tables[node].entries[root] = ports
    for table in tables:
        table.valid = True
    return tables
