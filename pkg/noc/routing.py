"""
Per-hop routing for the Hermes variants and the channel dependency checker.

Packets start in a dimension-order class (XY, or XY/YX for O1TURN) and move
to the Up*/Down* class the first time their productive link is faulty. The
switch is one-way. Up*/Down* hops follow the per-node tables filled by the
reconfiguration protocol.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import networkx as nx
import numpy as np

from noc.errors import ConfigurationError, RoutingError, UnreachableDestination
from noc.reconfig import RoutingTable
from noc.topology import DIRECTIONS, Direction, FaultSet, MeshTopology, UniLink

logger = logging.getLogger(__name__)


class RoutingVariant(str, Enum):
    PURE_UD = "pure_ud"
    H_XY = "h_xy"
    H_O1TURN = "h_o1turn"


class VcClass(str, Enum):
    XY = "xy"
    YX = "yx"
    UD = "ud"


MIN_VCS = {
    RoutingVariant.PURE_UD: 1,
    RoutingVariant.H_XY: 2,
    RoutingVariant.H_O1TURN: 3,
}
MAX_VCS = 3


def validate_variant(variant: RoutingVariant, vcs: int):
    if not MIN_VCS[variant] <= vcs <= MAX_VCS:
        raise ConfigurationError(
            f"{variant.value} needs between {MIN_VCS[variant]} and {MAX_VCS} VCs per port, got {vcs}"
        )


def vc_map(variant: RoutingVariant, vcs: int) -> dict[VcClass, tuple[int, ...]]:
    """VC indices per class; Up*/Down* always owns the last VC."""
    validate_variant(variant, vcs)
    if variant == RoutingVariant.PURE_UD:
        return {VcClass.UD: tuple(range(vcs))}
    if variant == RoutingVariant.H_XY:
        return {VcClass.XY: tuple(range(vcs - 1)), VcClass.UD: (vcs - 1,)}
    return {VcClass.XY: (0,), VcClass.YX: (1,), VcClass.UD: (2,)}


def injection_classes(variant: RoutingVariant) -> tuple[VcClass, ...]:
    if variant == RoutingVariant.PURE_UD:
        return (VcClass.UD,)
    if variant == RoutingVariant.H_XY:
        return (VcClass.XY,)
    return (VcClass.XY, VcClass.YX)


@dataclass(frozen=True, slots=True)
class RouteDecision:
    out_port: Direction | None
    vc_class: VcClass

    @property
    def is_local(self) -> bool:
        return self.out_port is None


@dataclass(frozen=True)
class NodeContext:
    node: int
    topology: MeshTopology
    table: RoutingTable


@dataclass(frozen=True)
class PacketHeader:
    dst: int
    vc_class: VcClass


def route_xy(t: MeshTopology, cur: int, dst: int) -> Direction:
    if cur == dst:
        raise RoutingError(f"route_xy called at the destination {dst}")
    cx, cy = t.coords(cur)
    dx, dy = t.coords(dst)
    if dx != cx:
        return Direction.E if dx > cx else Direction.W
    return Direction.S if dy > cy else Direction.N


def route_yx(t: MeshTopology, cur: int, dst: int) -> Direction:
    if cur == dst:
        raise RoutingError(f"route_yx called at the destination {dst}")
    cx, cy = t.coords(cur)
    dx, dy = t.coords(dst)
    if dy != cy:
        return Direction.S if dy > cy else Direction.N
    return Direction.E if dx > cx else Direction.W


def dor_direction(t: MeshTopology, cur: int, dst: int, vc_class: VcClass) -> Direction:
    if vc_class == VcClass.XY:
        return route_xy(t, cur, dst)
    if vc_class == VcClass.YX:
        return route_yx(t, cur, dst)
    raise RoutingError(f"{vc_class.value} is not a dimension-order class")


def select_injection_class(variant: RoutingVariant, rng: np.random.Generator) -> VcClass:
    if variant == RoutingVariant.H_O1TURN:
        return VcClass.XY if rng.random() < 0.5 else VcClass.YX
    if variant == RoutingVariant.H_XY:
        return VcClass.XY
    return VcClass.UD


def ud_select_port(entry: frozenset[Direction], t: MeshTopology, cur: int, dst: int) -> Direction:
    """Closest recorded direction to the destination; ties go N, E, S, W."""
    if not entry:
        raise UnreachableDestination(cur, dst)
    if len(entry) == 1:
        return next(iter(entry))
    return min(
        entry,
        key=lambda d: (t.manhattan(t.neighbor(cur, d), dst), int(d)),
    )


def route_packet(ctx: NodeContext, hdr: PacketHeader) -> RouteDecision:
    """
    Route a head flit one hop.

    Raises:
        UnreachableDestination: the Up*/Down* entry for the destination is empty.
    """
    cur, dst, t = ctx.node, hdr.dst, ctx.topology
    if cur == dst:
        return RouteDecision(None, hdr.vc_class)
    if hdr.vc_class != VcClass.UD:
        d = dor_direction(t, cur, dst, hdr.vc_class)
        if t.is_healthy(cur, d):
            return RouteDecision(d, hdr.vc_class)
    return RouteDecision(ud_select_port(ctx.table.entry(dst), t, cur, dst), VcClass.UD)


class HermesRouting:
    """Routing function of one configured network, with memoized decisions."""

    def __init__(
        self,
        topology: MeshTopology,
        tables: Sequence[RoutingTable],
        variant: RoutingVariant,
        vcs: int,
    ):
        self.topology = topology
        self.tables = tables
        self.variant = variant
        self.vcs = vcs
        self.vc_sets = vc_map(variant, vcs)
        self._contexts = [NodeContext(node, topology, tables[node]) for node in range(topology.n_nodes)]
        self._cache: dict[tuple[int, int, VcClass], RouteDecision] = {}

    def vc_set(self, vc_class: VcClass) -> tuple[int, ...]:
        return self.vc_sets[vc_class]

    def reaches(self, src: int, dst: int) -> bool:
        return self.tables[src].reaches(dst)

    def decide(self, cur: int, dst: int, vc_class: VcClass) -> RouteDecision:
        key = (cur, dst, vc_class)
        decision = self._cache.get(key)
        if decision is None:
            decision = route_packet(self._contexts[cur], PacketHeader(dst, vc_class))
            self._cache[key] = decision
        return decision

    def initial_class(self, src: int, dst: int, rng: np.random.Generator) -> VcClass:
        vc_class = select_injection_class(self.variant, rng)
        if vc_class != VcClass.UD and src != dst:
            if not self.topology.is_healthy(src, dor_direction(self.topology, src, dst, vc_class)):
                return VcClass.UD
        return vc_class


def trace_route(routing: HermesRouting, src: int, dst: int, vc_class: VcClass, max_hops: int | None = None) -> list[int]:
    """Nodes visited by a packet routed hop by hop without contention."""
    limit = max_hops if max_hops is not None else 2 * routing.topology.n_nodes
    path = [src]
    cur = src
    while cur != dst:
        decision = routing.decide(cur, dst, vc_class)
        vc_class = decision.vc_class
        cur = routing.topology.neighbor(cur, decision.out_port)
        path.append(cur)
        if len(path) - 1 > limit:
            raise RoutingError(f"route {src}->{dst} exceeded {limit} hops")
    return path


def build_cdg(
    t: MeshTopology,
    f: FaultSet | None,
    tables: Sequence[RoutingTable],
    variant: RoutingVariant,
    vcs: int | None = None,
) -> nx.DiGraph:
    """
    Channel dependency graph over (UniLink, vc) vertices.

    For every destination, the routing states reachable from some injection
    are walked; holding the channel a packet came in on while requesting the
    next one adds an edge between every VC of the two classes involved.
    """
    topology = t.with_faults(f) if f is not None else t
    routing = HermesRouting(topology, tables, variant, vcs if vcs is not None else MIN_VCS[variant])
    graph = nx.DiGraph()
    for link in topology.links():
        if topology.is_healthy(link.src, link.dir):
            for vc in range(routing.vcs):
                graph.add_node((link, vc))

    starts = injection_classes(variant)
    for dst in range(topology.n_nodes):
        seen: set[tuple[UniLink, VcClass]] = set()
        stack: list[tuple[UniLink, VcClass]] = []
        for src in range(topology.n_nodes):
            if src == dst or not routing.reaches(src, dst):
                continue
            for start in starts:
                vc_class = start
                if vc_class != VcClass.UD and not topology.is_healthy(src, dor_direction(topology, src, dst, vc_class)):
                    vc_class = VcClass.UD
                decision = routing.decide(src, dst, vc_class)
                state = (UniLink(src, decision.out_port), decision.vc_class)
                if state not in seen:
                    seen.add(state)
                    stack.append(state)
        while stack:
            link_in, cls_in = stack.pop()
            node = topology.neighbor(link_in.src, link_in.dir)
            decision = routing.decide(node, dst, cls_in)
            if decision.is_local:
                continue
            link_out = UniLink(node, decision.out_port)
            for vc_in in routing.vc_set(cls_in):
                for vc_out in routing.vc_set(decision.vc_class):
                    graph.add_edge((link_in, vc_in), (link_out, vc_out))
            state = (link_out, decision.vc_class)
            if state not in seen:
                seen.add(state)
                stack.append(state)
    return graph


def check_acyclic(graph: nx.DiGraph) -> tuple[bool, list]:
    """Return (True, []) or (False, the vertices of one dependency cycle)."""
    try:
        cycle = nx.find_cycle(graph, orientation="original")
    except nx.NetworkXNoCycle:
        return True, []
    return False, [edge[0] for edge in cycle]


def _vertex_label(vertex) -> str:
    link, vc = vertex
    return f"{link.src}{link.dir.letter}/{vc}"


def cdg_to_dot(graph: nx.DiGraph) -> str:
    lines = ["digraph cdg {"]
    for vertex in sorted(graph.nodes):
        lines.append(f'  "{_vertex_label(vertex)}";')
    for u, v in sorted(graph.edges):
        lines.append(f'  "{_vertex_label(u)}" -> "{_vertex_label(v)}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
