"""
Cycle-accurate wormhole network with virtual channels and credit flow control.

Router pipeline, per head flit that becomes ready in an input buffer at cycle a:

    a      RC   route computation
    a+1    VA   virtual channel allocation
    a+2    SA   switch allocation
    a+3    ST   crossbar traversal
    a+4    LT   link traversal
    a+5         flit ready in the downstream input buffer

Body and tail flits skip RC and VA. Ejection happens at ST of the destination
router. The network interface writes one flit per cycle into the local input
port; a flit written at cycle c is ready at c+1. For a packet of S flits
crossing H links with no contention:

    latency = 5*H + (S - 1) + ZERO_LOAD_OVERHEAD

An output VC is released only after the tail has left and every credit for it
has come back, so a VC never holds flits of two packets.
"""

import csv
import hashlib
import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Callable, Optional, Sequence, TextIO

import numpy as np

from noc.errors import DeadlockDetected, UnreachableDestination
from noc.reconfig import ReconfigOutcome, RoutingTable, run_reconfiguration, select_initiator
from noc.routing import HermesRouting, RoutingVariant, VcClass
from noc.topology import Direction, FaultSet, MeshTopology, victimize_bidirectional
from noc.traffic import PacketRequest

logger = logging.getLogger(__name__)

BUFFER_DEPTH = 5
LOCAL = 4
N_PORTS = 5
SA_TO_READY = 3
CREDIT_DELAY = 1
EJECT_DELAY = 1
ZERO_LOAD_OVERHEAD = 4
CYCLES_PER_HOP = 5
STATE_HASH_INTERVAL = 10_000
DEFAULT_WATCHDOG_HORIZON = 10_000

_OPPOSITE = (2, 3, 0, 1)


def zero_load_packet_latency(hops: int, size_flits: int) -> int:
    return CYCLES_PER_HOP * hops + (size_flits - 1) + ZERO_LOAD_OVERHEAD


class VcState(IntEnum):
    IDLE = 0
    ROUTING = 1
    ACTIVE = 2


class InjectStatus(str, Enum):
    ACCEPTED = "accepted"
    QUEUED = "queued"
    REJECTED_UNREACHABLE = "rejected_unreachable"


class DropReason(str, Enum):
    UNREACHABLE = "unreachable"
    SEVERED = "severed"


@dataclass(slots=True, eq=False)
class Packet:
    packet_id: int
    src: int
    dst: int
    size_flits: int
    created_cycle: int
    vc_class: Optional[VcClass] = None
    injected_cycle: Optional[int] = None
    ejected_cycle: Optional[int] = None
    hops: int = 0
    switched_to_ud: bool = False
    dropped: Optional[DropReason] = None
    trace_id: Optional[int] = None

    @property
    def latency(self) -> Optional[int]:
        if self.ejected_cycle is None:
            return None
        return self.ejected_cycle - self.created_cycle


@dataclass(slots=True, eq=False)
class Flit:
    packet: Packet
    index: int
    vc: int
    ready_cycle: int

    @property
    def is_head(self) -> bool:
        return self.index == 0

    @property
    def is_tail(self) -> bool:
        return self.index == self.packet.size_flits - 1


class InputVc:
    __slots__ = ("port", "index", "buffer", "state", "out_port", "out_vc", "stage_ready", "last_progress", "packet")

    def __init__(self, port: int, index: int):
        self.port = port
        self.index = index
        self.buffer: deque[Flit] = deque()
        self.state = VcState.IDLE
        self.out_port: Optional[int] = None
        self.out_vc: Optional[int] = None
        self.stage_ready = 0
        self.last_progress = 0
        self.packet: Optional[Packet] = None

    def reset(self):
        self.state = VcState.IDLE
        self.out_port = None
        self.out_vc = None
        self.packet = None


class Router:
    """Input-queued VC router; output state lives here, buffers at the next hop."""

    def __init__(self, node: int, neighbors: Sequence[int], vcs: int, depth: int):
        self.node = node
        self.neighbors = tuple(neighbors)
        self.inputs = [[InputVc(port, vc) for vc in range(vcs)] for port in range(N_PORTS)]
        self.credits = [[depth] * vcs for _ in range(4)]
        self.out_owner: list[list[Optional[InputVc]]] = [[None] * vcs for _ in range(4)]
        self.out_tail_sent = [[False] * vcs for _ in range(4)]
        self.sa_ptr = [0] * N_PORTS
        self.va_ptr = [0] * 4
        self.flits = 0

    def input_vcs(self):
        for port_vcs in self.inputs:
            yield from port_vcs


class NetworkInterface:
    """Source queue and injection side of the local port."""

    def __init__(self, node: int, vcs: int, depth: int):
        self.node = node
        self.queue: deque[Packet] = deque()
        self.current: Optional[Packet] = None
        self.next_flit = 0
        self.vc = 0
        self.credits = [depth] * vcs
        self.owner: list[Optional[Packet]] = [None] * vcs
        self.tail_sent = [False] * vcs
        self.max_depth = 0


@dataclass
class DeadlockReport:
    cycle: int
    horizon: int
    stalled: list[str]
    chain: list[str]
    cyclic: bool

    def __str__(self) -> str:
        kind = "cyclic wait" if self.cyclic else "stall"
        return (
            f"{kind} at cycle {self.cycle}: {len(self.stalled)} VC(s) idle for {self.horizon} cycles; "
            f"chain: {' -> '.join(self.chain)}"
        )


@dataclass
class NetworkStats:
    flits_injected: int = 0
    flits_delivered: int = 0
    flits_dropped: int = 0
    packets_delivered: int = 0
    packets_rejected: int = 0
    drops: Counter = field(default_factory=Counter)
    link_flits: Counter = field(default_factory=Counter)


class EventTrace:
    """CSV event log: cycle,router,event,packet_id,vc plus periodic state hashes."""

    def __init__(self, stream: TextIO):
        self.stream = stream
        self.writer = csv.writer(stream, lineterminator="\n")
        self.writer.writerow(["cycle", "router", "event", "packet_id", "vc"])

    def emit(self, cycle: int, router: int, event: str, packet_id: int, vc: Optional[int]):
        self.writer.writerow([cycle, router, event, packet_id, "" if vc is None else vc])

    def state(self, cycle: int, digest: str):
        self.stream.write(f"# state {cycle} {digest}\n")


class Network:
    def __init__(
        self,
        topology: MeshTopology,
        tables: Sequence[RoutingTable],
        variant: RoutingVariant,
        vcs: int,
        buffer_depth: int = BUFFER_DEPTH,
        seed: int = 0,
        routing: Optional[HermesRouting] = None,
        events: Optional[EventTrace] = None,
    ):
        self.topology = topology
        self.variant = variant
        self.vcs = vcs
        self.depth = buffer_depth
        self.routing = routing if routing is not None else HermesRouting(topology, tables, variant, vcs)
        self.events = events
        self.cycle = 0
        self.frozen_until: Optional[int] = None
        self.stats = NetworkStats()
        self.on_eject: Optional[Callable[[Packet], None]] = None
        self.on_drop: Optional[Callable[[Packet], None]] = None
        self.reconfigurations: list[ReconfigOutcome] = []

        n = topology.n_nodes
        self.routers = [
            Router(node, [topology.neighbor(node, d) if topology.has_port(node, d) else -1 for d in Direction], vcs, buffer_depth)
            for node in range(n)
        ]
        self.nis = [NetworkInterface(node, vcs, buffer_depth) for node in range(n)]
        self._class_rng = np.random.default_rng([seed, 0x0171])
        self._next_id = 0
        # (ready cycle, node, input port, vc, flit)
        self._links: deque = deque()
        # (cycle, node, output port or LOCAL for the interface, vc)
        self._credits: deque = deque()
        # (cycle, node, flit)
        self._ejects: deque = deque()
        self._pending: Optional[tuple[MeshTopology, ReconfigOutcome]] = None

    # ------------------------------------------------------------------ injection

    def inject(self, request: PacketRequest) -> InjectStatus:
        """Hand a packet to the source's network interface."""
        p = Packet(self._next_id, request.src, request.dst, request.size_flits, request.created_cycle,
                   trace_id=request.trace_id)
        self._next_id += 1
        if p.src == p.dst:
            p.injected_cycle = p.ejected_cycle = request.created_cycle
            self.stats.packets_delivered += 1
            if self.on_eject:
                self.on_eject(p)
            return InjectStatus.ACCEPTED
        if self.frozen_until is None and not self.routing.reaches(p.src, p.dst):
            self._reject(p)
            return InjectStatus.REJECTED_UNREACHABLE
        ni = self.nis[p.src]
        ni.queue.append(p)
        ni.max_depth = max(ni.max_depth, len(ni.queue))
        return InjectStatus.QUEUED

    def _reject(self, p: Packet):
        p.dropped = DropReason.UNREACHABLE
        self.stats.packets_rejected += 1
        self.stats.drops[DropReason.UNREACHABLE] += 1
        if self.on_drop:
            self.on_drop(p)

    def _start_packet(self, ni: NetworkInterface, t: int):
        while ni.queue:
            p = ni.queue[0]
            if not self.routing.reaches(ni.node, p.dst):
                ni.queue.popleft()
                self._reject(p)
                continue
            if p.vc_class is None:
                p.vc_class = self.routing.initial_class(ni.node, p.dst, self._class_rng)
                p.switched_to_ud = p.vc_class == VcClass.UD and self.variant != RoutingVariant.PURE_UD
            for vc in self.routing.vc_set(p.vc_class):
                if ni.owner[vc] is None:
                    ni.queue.popleft()
                    ni.owner[vc] = p
                    ni.tail_sent[vc] = False
                    ni.current = p
                    ni.next_flit = 0
                    ni.vc = vc
                    p.injected_cycle = t
                    if self.events:
                        self.events.emit(t, ni.node, "inject", p.packet_id, vc)
                    return
            return

    def _inject_flits(self, t: int):
        for ni in self.nis:
            if ni.current is None:
                if not ni.queue:
                    continue
                self._start_packet(ni, t)
                if ni.current is None:
                    continue
            vc = ni.vc
            if ni.credits[vc] <= 0:
                continue
            p = ni.current
            flit = Flit(p, ni.next_flit, vc, t + 1)
            router = self.routers[ni.node]
            ivc = router.inputs[LOCAL][vc]
            ivc.buffer.append(flit)
            ivc.last_progress = t
            router.flits += 1
            ni.credits[vc] -= 1
            ni.next_flit += 1
            self.stats.flits_injected += 1
            if flit.is_tail:
                ni.current = None
                ni.tail_sent[vc] = True
                self._release_ni_vc(ni, vc)

    def _release_ni_vc(self, ni: NetworkInterface, vc: int):
        if ni.tail_sent[vc] and ni.credits[vc] == self.depth:
            ni.owner[vc] = None
            ni.tail_sent[vc] = False

    # ------------------------------------------------------------------ pipeline

    def step(self):
        t = self.cycle
        if self.frozen_until is not None:
            if t < self.frozen_until:
                self.cycle += 1
                return
            self._resume(t)
        self._deliver(t)
        for router in self.routers:
            if router.flits:
                self._switch_traversal(router, t)
                self._vc_stage(router, t)
                self._route_stage(router, t)
        self._inject_flits(t)
        if self.events and t % STATE_HASH_INTERVAL == 0:
            self.events.state(t, self.state_hash())
        self.cycle += 1

    def run(self, cycles: int, watchdog_horizon: Optional[int] = None, check_every: int = 1000):
        """Advance ``cycles`` cycles, raising DeadlockDetected if the watchdog fires."""
        end = self.cycle + cycles
        while self.cycle < end:
            self.step()
            if watchdog_horizon and self.cycle % check_every == 0:
                report = self.watchdog_check(watchdog_horizon)
                if report is not None:
                    logger.error("watchdog: %s", report)
                    raise DeadlockDetected(report)

    def _deliver(self, t: int):
        links = self._links
        while links and links[0][0] <= t:
            _, node, port, vc, flit = links.popleft()
            router = self.routers[node]
            ivc = router.inputs[port][vc]
            flit.ready_cycle = t
            ivc.buffer.append(flit)
            ivc.last_progress = t
            router.flits += 1
        credits = self._credits
        while credits and credits[0][0] <= t:
            _, node, port, vc = credits.popleft()
            if port == LOCAL:
                ni = self.nis[node]
                ni.credits[vc] += 1
                self._release_ni_vc(ni, vc)
            else:
                router = self.routers[node]
                router.credits[port][vc] += 1
                self._release_out_vc(router, port, vc)
        ejects = self._ejects
        while ejects and ejects[0][0] <= t:
            _, node, flit = ejects.popleft()
            self.stats.flits_delivered += 1
            if flit.is_tail:
                p = flit.packet
                p.ejected_cycle = t
                self.stats.packets_delivered += 1
                if self.events:
                    self.events.emit(t, node, "eject", p.packet_id, flit.vc)
                if self.on_eject:
                    self.on_eject(p)

    def _release_out_vc(self, router: Router, port: int, vc: int):
        if router.out_tail_sent[port][vc] and router.credits[port][vc] == self.depth:
            router.out_owner[port][vc] = None
            router.out_tail_sent[port][vc] = False

    def _route_stage(self, router: Router, t: int):
        for port_vcs in router.inputs:
            for ivc in port_vcs:
                if ivc.state != VcState.IDLE or not ivc.buffer:
                    continue
                flit = ivc.buffer[0]
                if flit.ready_cycle > t:
                    continue
                p = flit.packet
                try:
                    decision = self.routing.decide(router.node, p.dst, p.vc_class)
                except UnreachableDestination:
                    self._drop_packet(p, DropReason.UNREACHABLE, t)
                    continue
                if decision.vc_class != p.vc_class:
                    p.vc_class = decision.vc_class
                    p.switched_to_ud = True
                    if self.events:
                        self.events.emit(t, router.node, "switch", p.packet_id, ivc.index)
                ivc.state = VcState.ROUTING
                ivc.out_port = LOCAL if decision.is_local else int(decision.out_port)
                ivc.stage_ready = t + 1
                ivc.packet = p

    def vc_allocate(self, router: Router, ivc: InputVc) -> Optional[int]:
        """Grant a free output VC of the packet's class, or None to stall."""
        port = ivc.out_port
        if port == LOCAL:
            return 0
        owners = router.out_owner[port]
        for vc in self.routing.vc_set(ivc.packet.vc_class):
            if owners[vc] is None:
                owners[vc] = ivc
                router.out_tail_sent[port][vc] = False
                return vc
        return None

    def _vc_stage(self, router: Router, t: int):
        requests: list[list[InputVc]] = [[] for _ in range(N_PORTS)]
        for port_vcs in router.inputs:
            for ivc in port_vcs:
                if ivc.state == VcState.ROUTING and ivc.stage_ready <= t:
                    requests[ivc.out_port].append(ivc)
        slots = N_PORTS * self.vcs
        for port, candidates in enumerate(requests):
            if not candidates:
                continue
            if port != LOCAL and len(candidates) > 1:
                ptr = router.va_ptr[port]
                candidates.sort(key=lambda c: (c.port * self.vcs + c.index - ptr) % slots)
            for ivc in candidates:
                granted = self.vc_allocate(router, ivc)
                if granted is None:
                    continue
                ivc.out_vc = granted
                ivc.state = VcState.ACTIVE
                ivc.stage_ready = t + 1
                ivc.last_progress = t
                if port != LOCAL:
                    router.va_ptr[port] = ivc.port * self.vcs + ivc.index + 1

    def switch_allocate(self, router: Router, t: int) -> dict[int, InputVc]:
        """One grant per output port and per input port, round-robin per output."""
        requests: list[list[InputVc]] = [[] for _ in range(N_PORTS)]
        for port_vcs in router.inputs:
            for ivc in port_vcs:
                if ivc.state != VcState.ACTIVE or not ivc.buffer or ivc.stage_ready > t:
                    continue
                if ivc.buffer[0].ready_cycle > t:
                    continue
                out = ivc.out_port
                if out != LOCAL and router.credits[out][ivc.out_vc] <= 0:
                    continue
                requests[out].append(ivc)
        grants: dict[int, InputVc] = {}
        used_inputs = set()
        slots = N_PORTS * self.vcs
        for k in range(N_PORTS):
            out = (t + k) % N_PORTS
            candidates = requests[out]
            if not candidates:
                continue
            ptr = router.sa_ptr[out]
            best = None
            best_rank = slots
            for ivc in candidates:
                if ivc.port in used_inputs:
                    continue
                rank = (ivc.port * self.vcs + ivc.index - ptr) % slots
                if rank < best_rank:
                    best, best_rank = ivc, rank
            if best is None:
                continue
            grants[out] = best
            used_inputs.add(best.port)
            router.sa_ptr[out] = best.port * self.vcs + best.index + 1
        return grants

    def _switch_traversal(self, router: Router, t: int):
        for out, ivc in self.switch_allocate(router, t).items():
            flit = ivc.buffer.popleft()
            router.flits -= 1
            ivc.last_progress = t
            if ivc.port == LOCAL:
                self._credits.append((t + CREDIT_DELAY, router.node, LOCAL, ivc.index))
            else:
                self._credits.append((t + CREDIT_DELAY, router.neighbors[ivc.port], _OPPOSITE[ivc.port], ivc.index))
            if out == LOCAL:
                self._ejects.append((t + EJECT_DELAY, router.node, flit))
            else:
                out_vc = ivc.out_vc
                router.credits[out][out_vc] -= 1
                flit.vc = out_vc
                self._links.append((t + SA_TO_READY, router.neighbors[out], _OPPOSITE[out], out_vc, flit))
                self.stats.link_flits[(router.node, out)] += 1
                if flit.is_head:
                    flit.packet.hops += 1
                if flit.is_tail:
                    router.out_tail_sent[out][out_vc] = True
                    self._release_out_vc(router, out, out_vc)
            if flit.is_tail:
                ivc.reset()

    # ------------------------------------------------------------------ drops

    def _drop_packet(self, p: Packet, reason: DropReason, t: int):
        removed = 0
        for router in self.routers:
            for ivc in router.input_vcs():
                if ivc.buffer and any(f.packet is p for f in ivc.buffer):
                    kept = deque(f for f in ivc.buffer if f.packet is not p)
                    count = len(ivc.buffer) - len(kept)
                    ivc.buffer = kept
                    router.flits -= count
                    removed += count
                    self._restore_credits(router, ivc, count)
                if ivc.packet is p:
                    if ivc.state == VcState.ACTIVE and ivc.out_port != LOCAL:
                        router.out_tail_sent[ivc.out_port][ivc.out_vc] = True
                        self._release_out_vc(router, ivc.out_port, ivc.out_vc)
                    ivc.reset()
        if any(entry[4].packet is p for entry in self._links):
            kept = deque()
            for entry in self._links:
                _, node, port, vc, flit = entry
                if flit.packet is p:
                    sender = self.routers[self.routers[node].neighbors[port]]
                    sender.credits[_OPPOSITE[port]][vc] += 1
                    self._release_out_vc(sender, _OPPOSITE[port], vc)
                    removed += 1
                else:
                    kept.append(entry)
            self._links = kept
        if any(entry[2].packet is p for entry in self._ejects):
            kept = deque(entry for entry in self._ejects if entry[2].packet is not p)
            removed += len(self._ejects) - len(kept)
            self._ejects = kept
        ni = self.nis[p.src]
        if ni.current is p:
            ni.current = None
            ni.tail_sent[ni.vc] = True
            self._release_ni_vc(ni, ni.vc)
        self.stats.flits_dropped += removed
        self.stats.drops[reason] += 1
        p.dropped = reason
        logger.warning("dropped packet %d (%d->%d) at cycle %d: %s", p.packet_id, p.src, p.dst, t, reason.value)
        if self.events:
            self.events.emit(t, p.src, "drop", p.packet_id, None)
        if self.on_drop:
            self.on_drop(p)

    def _restore_credits(self, router: Router, ivc: InputVc, count: int):
        if ivc.port == LOCAL:
            ni = self.nis[router.node]
            ni.credits[ivc.index] += count
            self._release_ni_vc(ni, ivc.index)
        else:
            upstream = self.routers[router.neighbors[ivc.port]]
            port = _OPPOSITE[ivc.port]
            upstream.credits[port][ivc.index] += count
            self._release_out_vc(upstream, port, ivc.index)

    # ------------------------------------------------------------------ reconfiguration

    def freeze_and_reconfigure(self, new_faults: FaultSet, initiator: Optional[int] = None) -> ReconfigOutcome:
        """
        Freeze the data plane and run a reconfiguration epoch for new faults.

        Nothing moves for N^2 cycles. Source queues keep filling. On resume the
        new tables take effect, surviving in-network packets continue in the
        Up*/Down* class from where their head is, and packets that can no
        longer arrive are dropped.

        A fault event during a running epoch restarts it at the current cycle
        over the union of the pending faults and the new ones.
        """
        t = self.cycle
        base = self._pending[0] if self._pending is not None else self.topology
        faults = victimize_bidirectional(new_faults, base)
        topology = base.with_faults(faults)
        added = faults.faulty - base.faulty
        if initiator is None:
            initiator = select_initiator(base, added, t)
        outcome = run_reconfiguration(topology, None, initiator, start_clock=t)
        held_until = self.frozen_until if self.frozen_until is not None else t
        if self._pending is not None:
            logger.info("epoch started at cycle %d restarted at %d", self._pending[1].start_clock, t)
        self._pending = (topology, outcome)
        self.frozen_until = outcome.resume_clock
        shift = outcome.resume_clock - held_until
        self._links = deque((c + shift, *rest) for c, *rest in self._links)
        self._credits = deque((c + shift, *rest) for c, *rest in self._credits)
        self._ejects = deque((c + shift, *rest) for c, *rest in self._ejects)
        self.reconfigurations.append(outcome)
        logger.info(
            "fault event at cycle %d: %d new faulty links, frozen until %d",
            t, len(added), self.frozen_until,
        )
        return outcome

    @property
    def frozen(self) -> bool:
        return self.frozen_until is not None

    def _resume(self, t: int):
        topology, outcome = self._pending
        self._pending = None
        self.frozen_until = None
        self.topology = topology
        self.routing = type(self.routing)(topology, outcome.tables, self.variant, self.vcs)

        severed = {}
        for _, node, port, _, flit in self._links:
            if not topology.is_healthy(node, Direction(port)):
                severed[id(flit.packet)] = flit.packet
        heads: dict[int, tuple[Packet, int, Optional[InputVc]]] = {}
        for router in self.routers:
            for ivc in router.input_vcs():
                if ivc.buffer and ivc.buffer[0].is_head:
                    heads[id(ivc.buffer[0].packet)] = (ivc.buffer[0].packet, router.node, ivc)
                p = ivc.packet
                if p is None or ivc.state != VcState.ACTIVE or ivc.out_port == LOCAL:
                    continue
                if topology.is_healthy(router.node, Direction(ivc.out_port)):
                    continue
                if not (ivc.buffer and ivc.buffer[0].is_head and ivc.buffer[0].packet is p):
                    severed[id(p)] = p
        for _, node, _, _, flit in self._links:
            if flit.is_head:
                heads[id(flit.packet)] = (flit.packet, node, None)

        for p in severed.values():
            self._drop_packet(p, DropReason.SEVERED, t)
        for key, (p, node, ivc) in heads.items():
            if key in severed:
                continue
            if not self.routing.reaches(node, p.dst):
                self._drop_packet(p, DropReason.UNREACHABLE, t)
                continue
            if p.vc_class != VcClass.UD:
                p.vc_class = VcClass.UD
                p.switched_to_ud = True
            if ivc is not None and ivc.state != VcState.IDLE:
                if ivc.state == VcState.ACTIVE and ivc.out_port != LOCAL:
                    self.routers[node].out_owner[ivc.out_port][ivc.out_vc] = None
                ivc.reset()
        # bodies whose head already left keep following it in their class
        for router in self.routers:
            for ivc in router.input_vcs():
                ivc.last_progress = t
        logger.info("resumed at cycle %d, %d packets severed", t, len(severed))

    # ------------------------------------------------------------------ checks

    def watchdog_check(self, horizon: int = DEFAULT_WATCHDOG_HORIZON) -> Optional[DeadlockReport]:
        """Report VCs whose buffered flits have not moved for ``horizon`` cycles."""
        if self.frozen_until is not None:
            return None
        t = self.cycle
        stalled = []
        for router in self.routers:
            if not router.flits:
                continue
            for ivc in router.input_vcs():
                if ivc.buffer and t - ivc.last_progress >= horizon:
                    stalled.append((router, ivc))
        if not stalled:
            return None
        chain = []
        seen = set()
        cyclic = False
        current = stalled[0]
        while current is not None:
            router, ivc = current
            key = (router.node, ivc.port, ivc.index)
            if key in seen:
                cyclic = True
                chain.append(self._describe(router, ivc))
                break
            seen.add(key)
            chain.append(self._describe(router, ivc))
            current = self._blocker(router, ivc)
        return DeadlockReport(t, horizon, [self._describe(r, v) for r, v in stalled], chain, cyclic)

    def _describe(self, router: Router, ivc: InputVc) -> str:
        port = "L" if ivc.port == LOCAL else Direction(ivc.port).letter
        pid = ivc.buffer[0].packet.packet_id if ivc.buffer else "-"
        return f"r{router.node}.{port}{ivc.index}(pkt {pid}, {ivc.state.name.lower()})"

    def _blocker(self, router: Router, ivc: InputVc):
        if ivc.state == VcState.ACTIVE and ivc.out_port != LOCAL:
            if router.credits[ivc.out_port][ivc.out_vc] == 0:
                downstream = self.routers[router.neighbors[ivc.out_port]]
                return downstream, downstream.inputs[_OPPOSITE[ivc.out_port]][ivc.out_vc]
            return None
        if ivc.state == VcState.ROUTING and ivc.out_port != LOCAL and ivc.packet is not None:
            for vc in self.routing.vc_set(ivc.packet.vc_class):
                owner = router.out_owner[ivc.out_port][vc]
                if owner is not None:
                    return router, owner
        return None

    def flits_in_flight(self) -> int:
        return sum(r.flits for r in self.routers) + len(self._links) + len(self._ejects)

    def check_conservation(self) -> bool:
        s = self.stats
        return s.flits_injected == s.flits_delivered + self.flits_in_flight() + s.flits_dropped

    def check_credits(self) -> bool:
        pending = Counter((node, port, vc) for _, node, port, vc in self._credits)
        inflight = Counter()
        for _, node, port, vc, _ in self._links:
            inflight[(self.routers[node].neighbors[port], _OPPOSITE[port], vc)] += 1
        for router in self.routers:
            for port in range(4):
                nb = router.neighbors[port]
                if nb < 0:
                    continue
                downstream = self.routers[nb].inputs[_OPPOSITE[port]]
                for vc in range(self.vcs):
                    key = (router.node, port, vc)
                    total = router.credits[port][vc] + len(downstream[vc].buffer) + inflight[key] + pending[key]
                    if total != self.depth:
                        return False
            ni = self.nis[router.node]
            for vc in range(self.vcs):
                total = ni.credits[vc] + len(router.inputs[LOCAL][vc].buffer) + pending[(router.node, LOCAL, vc)]
                if total != self.depth:
                    return False
        return True

    def queued_packets(self) -> int:
        return sum(len(ni.queue) + (ni.current is not None) for ni in self.nis)

    def idle(self) -> bool:
        return self.flits_in_flight() == 0 and self.queued_packets() == 0

    def state_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.cycle).encode())
        for router in self.routers:
            for ivc in router.input_vcs():
                h.update(repr((
                    int(ivc.state), ivc.out_port, ivc.out_vc,
                    tuple((f.packet.packet_id, f.index) for f in ivc.buffer),
                )).encode())
            h.update(repr(router.credits).encode())
        for ni in self.nis:
            h.update(repr((
                tuple(p.packet_id for p in ni.queue),
                ni.current.packet_id if ni.current else None,
                ni.next_flit, ni.credits,
            )).encode())
        for c, node, port, vc, flit in self._links:
            h.update(repr((c, node, port, vc, flit.packet.packet_id, flit.index)).encode())
        return h.hexdigest()


def step_cycle(network: Network) -> Network:
    network.step()
    return network


def build_network(
    topology: MeshTopology,
    outcome: ReconfigOutcome,
    variant: RoutingVariant,
    vcs: int,
    **kwargs,
) -> Network:
    """Network whose routers start with the tables of a completed reconfiguration."""
    return Network(topology, outcome.tables, variant, vcs, **kwargs)
