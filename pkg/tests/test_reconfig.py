import networkx as nx
import pytest

from noc.reconfig import (
    AlertRegister,
    ControlNetwork,
    PortMark,
    RouterCtrlState,
    RoutingTable,
    StatusRegister,
    detect_partitions,
    extract_root_schedule,
    mark_link,
    oracle_port_marks,
    oracle_ud_routes,
    run_reconfiguration,
    schedule_clock,
    select_initiator,
    step_broadcast_cycle,
    update_routing_table,
)
from noc.errors import ProtocolError
from noc.reports import format_reconfig_report
from noc.topology import (
    DIRECTIONS,
    FAULT_TIERS,
    Direction,
    UniLink,
    build_mesh,
    connected_components,
    inject_random_faults,
)


def test_root_schedule():
    assert extract_root_schedule(0, 9) == (0, 0)
    assert extract_root_schedule(10, 9) == (1, 1)
    assert extract_root_schedule(80, 9) == (8, 8)
    assert extract_root_schedule(81, 9) == (0, 0)
    # the initiator's window comes first
    assert extract_root_schedule(schedule_clock(5, 100, 100, 9), 9) == (5, 0)
    assert extract_root_schedule(schedule_clock(5, 100, 109, 9), 9) == (6, 0)
    assert extract_root_schedule(schedule_clock(8, 0, 9, 9), 9) == (0, 0)


def test_fig2_report_matches_golden(fig2_topology, fig2_outcome, golden_dir):
    expected = (golden_dir / "fig2_reconfig.txt").read_text()
    assert format_reconfig_report(fig2_topology, fig2_outcome) == expected


def test_fig2_partitions_and_alerts(fig2_outcome):
    assert fig2_outcome.duration_cycles == 81
    assert fig2_outcome.resume_clock == 81
    assert fig2_outcome.alerted == {2, 5, 8}
    assert fig2_outcome.border_links == {(1, 2), (4, 5), (7, 8)}
    assert fig2_outcome.partition_sets() == [frozenset({0, 1, 3, 4, 6, 7}), frozenset({2, 5, 8})]
    first = fig2_outcome.windows[0]
    assert first.root == 1
    assert first.scan_depth == 3
    assert first.isolated == {2, 5, 8}


def test_fig2_initiator_marks(fig2_outcome):
    marks = fig2_outcome.marks
    # node 1 marks the ports toward 0 and 4 as Down, the facing ports are Up
    assert marks[1][Direction.W] == PortMark.DOWN
    assert marks[1][Direction.S] == PortMark.DOWN
    assert marks[0][Direction.E] == PortMark.UP
    assert marks[4][Direction.N] == PortMark.UP
    # AF flags mark nothing
    assert marks[1][Direction.E] == PortMark.UNMARKED
    assert marks[2][Direction.W] == PortMark.UNMARKED


def test_fault_free_scan_depth_from_a_corner(mesh3):
    outcome = run_reconfiguration(mesh3, None, initiator=0)
    assert outcome.windows[0].scan_depth == 4
    assert outcome.windows[4].scan_depth == 2
    assert outcome.alerted == frozenset()
    assert outcome.border_links == frozenset()
    assert set(outcome.partitions.values()) == {0}


def test_tables_are_complete_in_a_connected_mesh():
    mesh = build_mesh(4, 4)
    topology = mesh.with_faults(inject_random_faults(mesh, 8, seed=3))
    outcome = run_reconfiguration(topology, None, initiator=6)
    for table in outcome.tables:
        assert table.valid
        for dst in range(topology.n_nodes):
            assert table.reaches(dst)
            for d in table.entry(dst):
                assert topology.is_healthy(table.owner, d)


@pytest.mark.parametrize("seed", range(5))
def test_protocol_matches_offline_oracle(seed):
    mesh = build_mesh(4, 4)
    topology = mesh.with_faults(inject_random_faults(mesh, 6, seed=seed))
    initiator = seed * 3 % 16
    outcome = run_reconfiguration(topology, None, initiator)
    assert [list(m) for m in outcome.marks] == oracle_port_marks(topology, initiator)
    oracle = oracle_ud_routes(topology, None, initiator)
    assert [t.entries for t in outcome.tables] == [t.entries for t in oracle]


@pytest.mark.parametrize("seed", range(4))
def test_marking_is_acyclic(seed):
    mesh = build_mesh(5, 5)
    topology = mesh.with_faults(inject_random_faults(mesh, 10, seed=seed))
    outcome = run_reconfiguration(topology, None, initiator=seed)
    # orient every marked link from its Down end to its Up end
    graph = nx.DiGraph()
    for node in range(topology.n_nodes):
        for d in DIRECTIONS:
            if outcome.marks[node][d] == PortMark.DOWN:
                graph.add_edge(node, topology.neighbor(node, d))
    assert nx.is_directed_acyclic_graph(graph)
    assert graph.number_of_edges() == topology.healthy_graph().number_of_edges()


@pytest.mark.parametrize("seed", range(4))
def test_partitions_match_connectivity(seed):
    mesh = build_mesh(4, 4)
    faults = inject_random_faults(mesh, 24, seed=seed, require_connected=False)
    topology = mesh.with_faults(faults)
    outcome = run_reconfiguration(topology, None, initiator=0)
    assert outcome.partitions == connected_components(topology)


def test_epoch_is_n_squared_from_detection():
    mesh = build_mesh(8, 8)
    outcome = run_reconfiguration(mesh, None, initiator=10, start_clock=20_000)
    assert outcome.duration_cycles == 4096
    assert outcome.resume_clock == 24_096
    assert outcome.windows[0].root == 10
    assert [w.root for w in outcome.windows][:3] == [10, 11, 12]


def test_initiator_is_first_fault_adjacent_node_from_the_clock_root(mesh3):
    links = [UniLink(7, Direction.E), UniLink(0, Direction.S)]
    # the clock designates root 4 at clock 40; adjacent nodes are 0, 3, 7, 8
    assert select_initiator(mesh3, links, 40) == 7
    assert select_initiator(mesh3, links, 0) == 0
    assert select_initiator(mesh3, [], 40) == 4


def test_mark_link_refuses_to_remark():
    a, b = RouterCtrlState(0), RouterCtrlState(1)
    mark_link(b, Direction.W, a)
    assert b.port_mark[Direction.W] == PortMark.UP
    assert a.port_mark[Direction.E] == PortMark.DOWN
    with pytest.raises(ProtocolError):
        mark_link(b, Direction.W, a)


def test_table_entry_is_written_once():
    table = RoutingTable.empty(3, 9)
    assert update_routing_table(table, 0, [Direction.N, Direction.E]) == {Direction.N, Direction.E}
    assert table.mask(0) == 0b0011
    with pytest.raises(ProtocolError):
        update_routing_table(table, 0, [Direction.S])


def test_alert_flag_ignored_while_recovering(mesh3):
    topology = mesh3.with_faults([UniLink(0, Direction.E), UniLink(1, Direction.W)])
    ctrl = ControlNetwork(topology)
    ctrl.begin_epoch()
    ctrl.enter_recovery(1)
    ctrl.begin_window(0)
    step_broadcast_cycle(ctrl, 0, 0)
    assert ctrl.states[1].ar == AlertRegister.NORMAL
    assert ctrl.states[1].sr == StatusRegister.RECOVERING
    assert ctrl.frontier == [3]
    assert (0, 1) in ctrl.af_crossings


def test_partition_detection_uses_mutual_entries():
    tables = [RoutingTable.empty(n, 3) for n in range(3)]
    tables[0].entries[1] = frozenset({Direction.E})
    tables[1].entries[0] = frozenset({Direction.W})
    tables[2].entries[1] = frozenset({Direction.W})
    assert detect_partitions(tables) == {0: 0, 1: 0, 2: 2}


@pytest.mark.slow
def test_partitions_detected_on_partitioned_eight_by_eight():
    mesh = build_mesh(8, 8)
    checked = 0
    for seed in range(1000):
        topology = mesh.with_faults(inject_random_faults(mesh, 90, seed=seed, require_connected=False))
        expected = connected_components(topology)
        if len(set(expected.values())) == 1:
            continue
        outcome = run_reconfiguration(topology, None, seed % topology.n_nodes)
        assert outcome.partitions == expected, seed
        assert detect_partitions(outcome.tables) == expected, seed
        checked += 1
        if checked == 100:
            break
    assert checked == 100


@pytest.mark.slow
@pytest.mark.parametrize("count", FAULT_TIERS)
def test_protocol_matches_offline_oracle_on_eight_by_eight(count):
    mesh = build_mesh(8, 8)
    for seed in range(40):
        topology = mesh.with_faults(inject_random_faults(mesh, count, seed=seed))
        initiator = seed * 7 % topology.n_nodes
        outcome = run_reconfiguration(topology, None, initiator)
        assert [list(m) for m in outcome.marks] == oracle_port_marks(topology, initiator), seed
        oracle = oracle_ud_routes(topology, None, initiator)
        assert [t.entries for t in outcome.tables] == [t.entries for t in oracle], seed
