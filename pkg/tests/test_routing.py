import networkx as nx
import numpy as np
import pytest

from noc.errors import ConfigurationError, UnreachableDestination
from noc.reconfig import run_reconfiguration
from noc.reports import cdg_report
from noc.routing import (
    MIN_VCS,
    HermesRouting,
    NodeContext,
    PacketHeader,
    RoutingVariant,
    VcClass,
    build_cdg,
    cdg_to_dot,
    check_acyclic,
    route_packet,
    route_xy,
    route_yx,
    select_injection_class,
    trace_route,
    ud_select_port,
    validate_variant,
    vc_map,
)
from noc.topology import FAULT_TIERS, Direction, FaultSet, UniLink, build_mesh, inject_random_faults, victimize_bidirectional


def _routing(topology, variant, vcs=None, initiator=0):
    outcome = run_reconfiguration(topology, None, initiator)
    return HermesRouting(topology, outcome.tables, variant, vcs or MIN_VCS[variant])


def _with_fault(mesh, link):
    return mesh.with_faults(victimize_bidirectional(FaultSet(frozenset({link})), mesh))


def test_vc_maps():
    assert vc_map(RoutingVariant.PURE_UD, 2) == {VcClass.UD: (0, 1)}
    assert vc_map(RoutingVariant.H_XY, 2) == {VcClass.XY: (0,), VcClass.UD: (1,)}
    assert vc_map(RoutingVariant.H_XY, 3) == {VcClass.XY: (0, 1), VcClass.UD: (2,)}
    assert vc_map(RoutingVariant.H_O1TURN, 3) == {VcClass.XY: (0,), VcClass.YX: (1,), VcClass.UD: (2,)}


@pytest.mark.parametrize(
    "variant,vcs",
    [
        (RoutingVariant.H_XY, 1),
        (RoutingVariant.H_O1TURN, 2),
        (RoutingVariant.PURE_UD, 0),
        (RoutingVariant.PURE_UD, 4),
    ],
)
def test_variant_needs_enough_vcs(variant, vcs):
    with pytest.raises(ConfigurationError):
        validate_variant(variant, vcs)


def test_dimension_order(mesh3):
    assert route_xy(mesh3, 0, 8) == Direction.E
    assert route_yx(mesh3, 0, 8) == Direction.S
    assert route_xy(mesh3, 2, 8) == Direction.S
    assert route_yx(mesh3, 6, 8) == Direction.E


def test_ud_port_tie_break(mesh3):
    # both neighbors are three hops from node 0; N wins over W
    assert ud_select_port(frozenset({Direction.N, Direction.W}), mesh3, 8, 0) == Direction.N
    assert ud_select_port(frozenset({Direction.S, Direction.E}), mesh3, 4, 8) == Direction.E
    with pytest.raises(UnreachableDestination):
        ud_select_port(frozenset(), mesh3, 4, 8)


def test_route_packet_at_destination(mesh3):
    outcome = run_reconfiguration(mesh3, None, 0)
    decision = route_packet(NodeContext(4, mesh3, outcome.tables[4]), PacketHeader(4, VcClass.XY))
    assert decision.is_local


def test_pure_ud_path(mesh3):
    routing = _routing(mesh3, RoutingVariant.PURE_UD)
    assert trace_route(routing, 8, 0, VcClass.UD) == [8, 5, 2, 1, 0]


def test_fault_free_hybrid_stays_in_dimension_order(mesh3):
    routing = _routing(mesh3, RoutingVariant.H_XY)
    assert trace_route(routing, 0, 8, VcClass.XY) == [0, 1, 2, 5, 8]
    assert routing.decide(0, 8, VcClass.XY).vc_class == VcClass.XY


def test_hybrid_switches_at_a_faulty_link(mesh3):
    topology = _with_fault(mesh3, UniLink(1, Direction.E))
    routing = _routing(topology, RoutingVariant.H_XY)
    assert routing.decide(0, 2, VcClass.XY).out_port == Direction.E
    switched = routing.decide(1, 2, VcClass.XY)
    assert switched.vc_class == VcClass.UD
    assert switched.out_port != Direction.E
    path = trace_route(routing, 0, 2, VcClass.XY)
    assert path[:2] == [0, 1]
    assert path[-1] == 2
    assert all(topology.manhattan(a, b) == 1 for a, b in zip(path, path[1:]))


def test_injection_switches_when_the_first_hop_is_faulty(mesh3):
    topology = _with_fault(mesh3, UniLink(0, Direction.E))
    routing = _routing(topology, RoutingVariant.H_XY)
    rng = np.random.default_rng(0)
    assert routing.initial_class(0, 2, rng) == VcClass.UD
    assert routing.initial_class(0, 6, rng) == VcClass.XY


def test_o1turn_draws_both_classes(mesh3):
    routing = _routing(mesh3, RoutingVariant.H_O1TURN)
    rng = np.random.default_rng(4)
    drawn = {routing.initial_class(0, 8, rng) for _ in range(64)}
    assert drawn == {VcClass.XY, VcClass.YX}


@pytest.mark.parametrize("variant", list(RoutingVariant))
@pytest.mark.parametrize("seed", range(3))
def test_dependency_graph_is_acyclic(variant, seed):
    mesh = build_mesh(5, 5)
    topology = mesh.with_faults(inject_random_faults(mesh, 12, seed=seed))
    outcome = run_reconfiguration(topology, None, initiator=seed)
    graph = build_cdg(topology, None, outcome.tables, variant, MIN_VCS[variant])
    acyclic, witness = check_acyclic(graph)
    assert acyclic
    assert witness == []
    assert graph.number_of_edges() > 0


def test_every_ud_route_reaches_its_destination():
    mesh = build_mesh(4, 4)
    topology = mesh.with_faults(inject_random_faults(mesh, 8, seed=13))
    routing = _routing(topology, RoutingVariant.PURE_UD, initiator=5)
    for src in range(16):
        for dst in range(16):
            path = trace_route(routing, src, dst, VcClass.UD)
            assert path[-1] == dst


def test_cycle_witness():
    a = (UniLink(0, Direction.E), 0)
    b = (UniLink(1, Direction.W), 0)
    graph = nx.DiGraph([(a, b), (b, a)])
    acyclic, witness = check_acyclic(graph)
    assert not acyclic
    assert set(witness) == {a, b}


def test_dot_output():
    a = (UniLink(0, Direction.E), 0)
    b = (UniLink(1, Direction.S), 1)
    dot = cdg_to_dot(nx.DiGraph([(a, b)]))
    assert dot.startswith("digraph cdg {\n")
    assert '  "0E/0" -> "1S/1";' in dot
    assert dot.endswith("}\n")


def test_cdg_report_counts_vertices(mesh3):
    outcome = run_reconfiguration(mesh3, None, 0)
    summary = cdg_report(mesh3, outcome, RoutingVariant.H_XY, 2)
    assert summary.acyclic
    assert summary.vertices == 24 * 2
    assert summary.edges > 0
    assert summary.dot.count(" -> ") == summary.edges


def test_o1turn_splits_packets_evenly():
    rng = np.random.default_rng(11)
    draws = 1_000_000
    xy = sum(select_injection_class(RoutingVariant.H_O1TURN, rng) == VcClass.XY for _ in range(draws))
    assert abs(xy / draws - 0.5) <= 0.005


@pytest.mark.slow
@pytest.mark.parametrize("count", FAULT_TIERS)
def test_dependency_graph_is_acyclic_on_eight_by_eight(count):
    mesh = build_mesh(8, 8)
    for seed in range(200):
        # every other instance may leave the mesh partitioned
        faults = inject_random_faults(mesh, count, seed=seed, require_connected=seed % 2 == 0)
        topology = mesh.with_faults(faults)
        outcome = run_reconfiguration(topology, None, seed % topology.n_nodes)
        for variant in RoutingVariant:
            graph = build_cdg(topology, None, outcome.tables, variant, MIN_VCS[variant])
            acyclic, cycle = check_acyclic(graph)
            assert acyclic, (count, seed, variant, cycle)


@pytest.mark.slow
def test_every_packet_arrives_within_twice_the_node_count():
    mesh = build_mesh(8, 8)
    limit = 2 * mesh.n_nodes
    tiers = FAULT_TIERS[1:]
    for instance in range(500):
        topology = mesh.with_faults(inject_random_faults(mesh, tiers[instance % len(tiers)], seed=instance))
        routing = _routing(topology, RoutingVariant.H_O1TURN, 3, initiator=instance % topology.n_nodes)
        for src in range(topology.n_nodes):
            for dst in range(topology.n_nodes):
                for vc_class in (VcClass.XY, VcClass.YX, VcClass.UD):
                    path = trace_route(routing, src, dst, vc_class, max_hops=limit)
                    assert path[-1] == dst
