import pytest

from noc.errors import ConfigurationError, FaultInjectionError
from noc.topology import (
    FAULT_TIERS,
    Direction,
    FaultSet,
    LinkHealth,
    Placement,
    UniLink,
    build_mesh,
    connected_components,
    dump_faults,
    faults_for_percent,
    hotspot_region,
    inject_hotspot_faults,
    inject_random_faults,
    is_connected,
    load_faults,
    max_tolerable_faults,
    percent_faulty,
    victimize_bidirectional,
)


def test_link_counts():
    mesh = build_mesh(8, 8)
    assert mesh.n_nodes == 64
    assert mesh.link_count == 224
    assert mesh.bidirectional_link_count == 112
    assert len(mesh.links()) == 224
    assert build_mesh(3, 3).link_count == 24


def test_coordinates_are_a_bijection():
    mesh = build_mesh(5, 3)
    seen = set()
    for node in range(mesh.n_nodes):
        x, y = mesh.coords(node)
        assert 0 <= x < 5 and 0 <= y < 3
        assert mesh.node_at(x, y) == node
        seen.add((x, y))
    assert len(seen) == 15


def test_neighbors_have_no_wraparound(mesh3):
    assert mesh3.neighbor(0, Direction.N) is None
    assert mesh3.neighbor(0, Direction.W) is None
    assert mesh3.neighbor(0, Direction.E) == 1
    assert mesh3.neighbor(0, Direction.S) == 3
    assert mesh3.neighbor(8, Direction.E) is None
    assert mesh3.direction_to(4, 1) == Direction.N
    assert Direction.N.opposite == Direction.S


def test_invalid_dimensions():
    with pytest.raises(ConfigurationError):
        build_mesh(0, 4)


def test_unidirectional_fault_disables_both_directions(mesh3):
    faulty = mesh3.with_faults([UniLink(1, Direction.E)])
    assert not faulty.is_healthy(1, Direction.E)
    assert not faulty.is_healthy(2, Direction.W)
    assert faulty.health(UniLink(1, Direction.E)) == LinkHealth.FAULTY
    assert faulty.is_healthy(1, Direction.S)


def test_victimization_closes_pairs(mesh3):
    faults = victimize_bidirectional(FaultSet(frozenset({UniLink(4, Direction.S)})), mesh3)
    assert faults.faulty == {UniLink(4, Direction.S), UniLink(7, Direction.N)}


def test_max_tolerable_faults():
    assert max_tolerable_faults(build_mesh(8, 8)) == 112 - 63
    assert max_tolerable_faults(build_mesh(3, 3)) == 12 - 8


@pytest.mark.parametrize("count", FAULT_TIERS)
def test_random_faults_meet_the_tier_count(count):
    mesh = build_mesh(8, 8)
    faults = inject_random_faults(mesh, count, seed=7)
    # victimization rounds up to whole bidirectional links
    assert len(faults) == 2 * ((count + 1) // 2)
    assert is_connected(mesh.with_faults(faults))
    assert faults == victimize_bidirectional(faults, mesh)


def test_random_faults_are_seeded():
    mesh = build_mesh(8, 8)
    assert inject_random_faults(mesh, 12, seed=3) == inject_random_faults(mesh, 12, seed=3)
    assert inject_random_faults(mesh, 12, seed=3) != inject_random_faults(mesh, 12, seed=4)


def test_random_faults_without_victimization():
    mesh = build_mesh(4, 4)
    faults = inject_random_faults(mesh, 5, seed=1, victimize=False)
    assert len(faults) == 5
    for link in faults.faulty:
        assert mesh.paired(link) not in faults.faulty


def test_too_many_faults_is_reported_with_the_seed():
    mesh = build_mesh(3, 3)
    with pytest.raises(FaultInjectionError) as exc:
        inject_random_faults(mesh, 2 * max_tolerable_faults(mesh) + 2, seed=11)
    assert exc.value.seed == 11
    assert "seed=11" in str(exc.value)


def test_disconnected_draws_allowed_when_requested():
    mesh = build_mesh(3, 3)
    faults = inject_random_faults(mesh, 16, seed=2, require_connected=False)
    assert len(faults) == 16


def test_base_faults_are_kept_and_avoided():
    mesh = build_mesh(8, 8)
    base = inject_random_faults(mesh, 12, seed=5)
    grown = inject_random_faults(mesh, 6, seed=6, base=base)
    assert base.faulty < grown.faulty
    assert len(grown) == len(base) + 6


def test_hotspot_places_half_inside_the_center():
    mesh = build_mesh(8, 8)
    x0, y0, w, h = hotspot_region(mesh)
    assert (x0, y0, w, h) == (2, 2, 4, 4)

    def inside(node):
        x, y = mesh.coords(node)
        return x0 <= x < x0 + w and y0 <= y < y0 + h

    faults = inject_hotspot_faults(mesh, 12, seed=9)
    assert faults.placement == Placement.HOTSPOT
    pairs = {tuple(sorted((l.src, mesh.neighbor(l.src, l.dir)))) for l in faults.faulty}
    assert len(pairs) == 6
    assert sum(inside(a) and inside(b) for a, b in pairs) == 3


def test_fault_file_round_trip():
    faults = inject_random_faults(build_mesh(4, 4), 6, seed=21)
    text = dump_faults(faults)
    assert text.startswith("# seed 21\n# placement random\n")
    assert load_faults(text, build_mesh(4, 4)) == faults


def test_fault_file_errors(mesh3):
    with pytest.raises(ConfigurationError):
        load_faults("1 Q\n", mesh3)
    with pytest.raises(ConfigurationError):
        load_faults("2 E\n", mesh3)
    with pytest.raises(ConfigurationError):
        load_faults("one two three\n", mesh3)


def test_components_label_by_smallest_member(fig2_topology):
    labels = connected_components(fig2_topology)
    assert labels == {0: 0, 1: 0, 3: 0, 4: 0, 6: 0, 7: 0, 2: 2, 5: 2, 8: 2}
    assert not is_connected(fig2_topology)


def test_percentages():
    mesh = build_mesh(8, 8)
    assert faults_for_percent(mesh, 10) == 22
    assert faults_for_percent(mesh, 0) == 0
    faults = inject_random_faults(mesh, 12, seed=0)
    assert percent_faulty(mesh, faults) == pytest.approx(100 * 12 / 224)
    with pytest.raises(ConfigurationError):
        faults_for_percent(mesh, 150)


@pytest.mark.parametrize("header", ["# seed x\n", "# placement corner\n"])
def test_fault_file_header_errors(mesh3, header):
    with pytest.raises(ConfigurationError) as exc:
        load_faults(header + "1 E\n", mesh3)
    assert "line 1" in str(exc.value)


def test_hotspot_fault_density():
    mesh = build_mesh(8, 8)
    x0, y0, w, h = hotspot_region(mesh)

    def inside(node):
        x, y = mesh.coords(node)
        return x0 <= x < x0 + w and y0 <= y < y0 + h

    internal = [(a, b) for a, b in mesh.bidirectional_links() if inside(a) and inside(b)]
    assert len(internal) == 24
    for seed in range(5):
        faults = inject_hotspot_faults(mesh, 24, seed=seed)
        inner = sum(1 for l in faults.faulty if inside(l.src) and inside(mesh.neighbor(l.src, l.dir)))
        outer = len(faults) - inner
        assert (inner, outer) == (12, 12)
        density = (inner / (2 * len(internal))) / (outer / (mesh.link_count - 2 * len(internal)))
        assert 3 <= density <= 4


def test_max_tolerable_faults_on_every_mesh_up_to_eight_by_eight():
    assert max_tolerable_faults(build_mesh(8, 8)) == 49
    for kx in range(1, 9):
        for ky in range(1, 9):
            mesh = build_mesh(kx, ky)
            limit = max_tolerable_faults(mesh)
            assert limit == mesh.bidirectional_link_count - (mesh.n_nodes - 1)
            if mesh.n_nodes == 1:
                continue
            # one link past the limit always cuts the mesh
            beyond = inject_random_faults(mesh, 2 * (limit + 1), seed=kx * 8 + ky, require_connected=False)
            assert not is_connected(mesh.with_faults(beyond))
            with pytest.raises(FaultInjectionError):
                inject_random_faults(mesh, 2 * (limit + 1), seed=0)
