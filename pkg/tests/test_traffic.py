import numpy as np
import pytest

from noc.errors import ConfigurationError, TraceLoadError
from noc.topology import build_mesh
from noc.traffic import (
    SyntheticTraffic,
    TraceReplay,
    TrafficPattern,
    flits_for_bits,
    load_trace,
    parse_trace,
    transpose_destination,
)
from schemas.experiments import TrafficConfig


def test_flits_for_bits():
    assert flits_for_bits(64) == 1
    assert flits_for_bits(128) == 1
    assert flits_for_bits(129) == 2
    assert flits_for_bits(576) == 5
    with pytest.raises(ConfigurationError):
        flits_for_bits(0)


def test_transpose_destination():
    mesh = build_mesh(4, 4)
    assert transpose_destination(mesh, mesh.node_at(1, 3)) == mesh.node_at(3, 1)
    assert transpose_destination(mesh, mesh.node_at(2, 2)) is None
    with pytest.raises(ConfigurationError):
        transpose_destination(build_mesh(4, 2), 1)


def _count(traffic, cycles):
    requests = []
    for cycle in range(cycles):
        requests.extend(traffic.generate(cycle))
    return requests


def test_uniform_rate_matches_the_offered_load():
    mesh = build_mesh(4, 4)
    cfg = TrafficConfig(rate=0.12, seed=3)
    requests = _count(SyntheticTraffic(cfg, mesh), 5000)
    offered = sum(r.size_flits for r in requests) / (16 * 5000)
    assert offered == pytest.approx(0.12, rel=0.08)
    assert all(r.src != r.dst for r in requests)
    assert {r.dst for r in requests} == set(range(16))


def test_uniform_packet_rate_on_eight_by_eight():
    mesh = build_mesh(8, 8)
    cycles = 5000
    requests = _count(SyntheticTraffic(TrafficConfig(rate=0.6, packet_size_flits=6, seed=8), mesh), cycles)
    assert len(requests) / (mesh.n_nodes * cycles) == pytest.approx(0.1, abs=0.003)


def test_uniform_destinations_pass_a_chi_square_check():
    mesh = build_mesh(4, 4)
    requests = _count(SyntheticTraffic(TrafficConfig(rate=0.6, seed=5), mesh), 20_000)
    observed = np.bincount([r.dst for r in requests], minlength=mesh.n_nodes)
    expected = len(requests) / mesh.n_nodes
    statistic = float(((observed - expected) ** 2 / expected).sum())
    # 15 degrees of freedom at the 0.001 level
    assert statistic < 37.70


def test_transpose_sources_skip_the_diagonal():
    mesh = build_mesh(4, 4)
    requests = _count(SyntheticTraffic(TrafficConfig(pattern=TrafficPattern.TRANSPOSE, rate=0.3), mesh), 500)
    diagonal = {mesh.node_at(i, i) for i in range(4)}
    assert requests
    assert not {r.src for r in requests} & diagonal
    assert all(r.dst == transpose_destination(mesh, r.src) for r in requests)


def test_synthetic_traffic_is_seeded():
    mesh = build_mesh(4, 4)

    def draw(seed):
        return _count(SyntheticTraffic(TrafficConfig(rate=0.2, seed=seed), mesh), 300)

    assert draw(1) == draw(1)
    assert draw(1) != draw(2)


def test_traffic_config_rejects_bad_rates():
    with pytest.raises(ValueError):
        TrafficConfig(rate=0)
    with pytest.raises(ValueError):
        TrafficConfig(rate=1.5)
    with pytest.raises(ValueError):
        TrafficConfig(pattern=TrafficPattern.TRACE)


def test_parse_trace_fixture(fixtures_dir):
    schedule = load_trace(fixtures_dir / "request_reply.trace", n_nodes=16)
    assert len(schedule) == 8
    assert schedule.sizes == {1, 5}
    assert schedule.index[7].deps == (6,)
    assert schedule.dependents[0] == [1]


@pytest.mark.parametrize(
    "text,line_no,message",
    [
        ("0 0 1 1 0\n0 1 2 1 0\n", 2, "duplicate"),
        ("0 0 1 1 0 9\n", 1, "unknown"),
        ("0 0 x 1 0\n", 1, "integer"),
        ("0 0 1\n", 1, "expected"),
        ("0 0 1 0 0\n", 1, "size"),
        ("0 0 99 1 0\n", 1, "outside"),
    ],
)
def test_parse_trace_errors(text, line_no, message):
    with pytest.raises(TraceLoadError) as exc:
        parse_trace(text, n_nodes=16)
    assert exc.value.line_no == line_no
    assert message in str(exc.value)
    assert str(exc.value).startswith(f"line {line_no}: ")


def test_missing_trace_file(tmp_path):
    with pytest.raises(TraceLoadError):
        load_trace(tmp_path / "absent.trace")


def test_replay_waits_for_dependencies():
    replay = TraceReplay(parse_trace("0 0 1 1 0\n1 1 0 1 0 0\n2 2 3 1 50\n"))
    first = replay.generate(0)
    assert [r.trace_id for r in first] == [0]
    assert replay.generate(10) == []
    replay.complete(0)
    (reply,) = replay.generate(11)
    assert reply.trace_id == 1
    assert reply.created_cycle == 11
    assert [r.trace_id for r in replay.generate(50)] == [2]
    assert not replay.exhausted
    replay.complete(1)
    replay.complete(2)
    assert replay.exhausted


def test_replay_counts_repeated_dependencies_once():
    replay = TraceReplay(parse_trace("0 0 1 1 0\n1 1 0 1 0 0 0\n"))
    replay.generate(0)
    replay.complete(0)
    replay.complete(0)
    assert [r.trace_id for r in replay.generate(1)] == [1]
    assert replay.generate(2) == []


def test_dependency_cycle_names_its_packets():
    with pytest.raises(TraceLoadError) as exc:
        parse_trace("# header\n0 0 1 1 0 1\n1 1 0 1 0 0\n")
    assert exc.value.line_no in (2, 3)
    assert "dependency cycle" in str(exc.value)
