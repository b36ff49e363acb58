"""
2D mesh topology, link health and fault injection.

Nodes are numbered row-major: index = y * kx + x, with y growing southward.
Links are unidirectional; a UniLink is identified by its source node and the
direction it leaves in. Faults are stored as a frozen set of UniLinks on the
topology value itself, so a faulty mesh is just another MeshTopology.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, NamedTuple

import networkx as nx
import numpy as np

from noc.errors import ConfigurationError, FaultInjectionError

logger = logging.getLogger(__name__)

MAX_FAULT_DRAWS = 10_000

# Unidirectional fault tiers used throughout the experiments on an 8x8 mesh.
FAULT_TIERS = (0, 1, 12, 23, 27)


class Direction(IntEnum):
    N = 0
    E = 1
    S = 2
    W = 3

    @property
    def opposite(self) -> "Direction":
        return Direction((self + 2) % 4)

    @property
    def letter(self) -> str:
        return self.name

    @classmethod
    def from_letter(cls, letter: str) -> "Direction":
        try:
            return cls[letter.strip().upper()]
        except KeyError:
            raise ConfigurationError(f"unknown direction {letter!r}") from None


DIRECTIONS = (Direction.N, Direction.E, Direction.S, Direction.W)

_DELTAS = {
    Direction.N: (0, -1),
    Direction.E: (1, 0),
    Direction.S: (0, 1),
    Direction.W: (-1, 0),
}


class LinkHealth(str, Enum):
    HEALTHY = "healthy"
    FAULTY = "faulty"


class Placement(str, Enum):
    RANDOM = "random"
    HOTSPOT = "hotspot"


class UniLink(NamedTuple):
    src: int
    dir: Direction

    def __str__(self) -> str:
        return f"{self.src}:{self.dir.letter}"


@dataclass(frozen=True)
class FaultSet:
    faulty: frozenset[UniLink] = frozenset()
    placement: Placement = Placement.RANDOM
    seed: int = 0

    def __len__(self) -> int:
        return len(self.faulty)

    def __contains__(self, link: UniLink) -> bool:
        return link in self.faulty


@dataclass(frozen=True)
class MeshTopology:
    kx: int
    ky: int
    faulty: frozenset[UniLink] = frozenset()
    # neighbor table: _neighbors[node][dir] -> node id or -1
    _neighbors: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    # usable table: neighbor exists and the link is healthy in both directions;
    # a unidirectional fault victimizes its pair for every user of the mesh
    _usable: tuple[tuple[bool, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        neighbors = []
        usable = []
        for node in range(self.kx * self.ky):
            x, y = node % self.kx, node // self.kx
            row = []
            for d in DIRECTIONS:
                dx, dy = _DELTAS[d]
                nx_, ny_ = x + dx, y + dy
                if 0 <= nx_ < self.kx and 0 <= ny_ < self.ky:
                    row.append(ny_ * self.kx + nx_)
                else:
                    row.append(-1)
            neighbors.append(tuple(row))
            usable.append(tuple(
                row[d] >= 0
                and UniLink(node, d) not in self.faulty
                and UniLink(row[d], d.opposite) not in self.faulty
                for d in DIRECTIONS
            ))
        object.__setattr__(self, "_neighbors", tuple(neighbors))
        object.__setattr__(self, "_usable", tuple(usable))

    @property
    def n_nodes(self) -> int:
        return self.kx * self.ky

    @property
    def link_count(self) -> int:
        """Unidirectional link count |C|."""
        return 2 * (self.kx * (self.ky - 1) + self.ky * (self.kx - 1))

    @property
    def bidirectional_link_count(self) -> int:
        return self.link_count // 2

    def coords(self, node: int) -> tuple[int, int]:
        return node % self.kx, node // self.kx

    def node_at(self, x: int, y: int) -> int:
        if not (0 <= x < self.kx and 0 <= y < self.ky):
            raise ConfigurationError(f"coordinate ({x}, {y}) outside {self.kx}x{self.ky} mesh")
        return y * self.kx + x

    def neighbor(self, node: int, direction: Direction) -> int | None:
        nb = self._neighbors[node][direction]
        return nb if nb >= 0 else None

    def direction_to(self, node: int, other: int) -> Direction:
        for d in DIRECTIONS:
            if self._neighbors[node][d] == other:
                return d
        raise ConfigurationError(f"nodes {node} and {other} are not adjacent")

    def manhattan(self, a: int, b: int) -> int:
        return abs(a % self.kx - b % self.kx) + abs(a // self.kx - b // self.kx)

    def has_port(self, node: int, direction: Direction) -> bool:
        return self._neighbors[node][direction] >= 0

    def is_healthy(self, node: int, direction: Direction) -> bool:
        return self._usable[node][direction]

    def health(self, link: UniLink) -> LinkHealth:
        if not self.has_port(link.src, link.dir):
            raise ConfigurationError(f"link {link} leaves the mesh")
        return LinkHealth.FAULTY if link in self.faulty else LinkHealth.HEALTHY

    def paired(self, link: UniLink) -> UniLink:
        return UniLink(self._neighbors[link.src][link.dir], link.dir.opposite)

    def links(self) -> list[UniLink]:
        return [
            UniLink(node, d)
            for node in range(self.n_nodes)
            for d in DIRECTIONS
            if self._neighbors[node][d] >= 0
        ]

    def bidirectional_links(self) -> list[tuple[int, int]]:
        """Each physical link once, as (lower id, higher id)."""
        return [
            (node, self._neighbors[node][d])
            for node in range(self.n_nodes)
            for d in (Direction.E, Direction.S)
            if self._neighbors[node][d] >= 0
        ]

    def healthy_ports(self, node: int) -> list[Direction]:
        return [d for d in DIRECTIONS if self._usable[node][d]]

    def with_faults(self, faults: "FaultSet | Iterable[UniLink]") -> "MeshTopology":
        links = faults.faulty if isinstance(faults, FaultSet) else frozenset(faults)
        for link in links:
            if not self.has_port(link.src, link.dir):
                raise ConfigurationError(f"link {link} leaves the mesh")
        return MeshTopology(self.kx, self.ky, self.faulty | links)

    def healthy_graph(self) -> nx.Graph:
        """Undirected graph of links that are healthy in both directions."""
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n_nodes))
        for a, b in self.bidirectional_links():
            if self._usable[a][self.direction_to(a, b)]:
                graph.add_edge(a, b)
        return graph


def build_mesh(kx: int, ky: int) -> MeshTopology:
    if kx < 1 or ky < 1:
        raise ConfigurationError(f"mesh dimensions must be positive, got {kx}x{ky}")
    return MeshTopology(kx, ky)


def victimize_bidirectional(f: FaultSet, t: MeshTopology) -> FaultSet:
    """Close a fault set under link pairing."""
    closed = set(f.faulty)
    closed.update(t.paired(link) for link in f.faulty)
    return FaultSet(frozenset(closed), f.placement, f.seed)


def connected_components(t: MeshTopology) -> dict[int, int]:
    """Partition label per node, the label being the smallest member id."""
    labels = {}
    for component in nx.connected_components(t.healthy_graph()):
        label = min(component)
        for node in component:
            labels[node] = label
    return labels


def is_connected(t: MeshTopology) -> bool:
    return t.n_nodes <= 1 or nx.is_connected(t.healthy_graph())


def max_tolerable_faults(t: MeshTopology) -> int:
    """Bidirectional links that can fail before a spanning tree is impossible."""
    return t.bidirectional_link_count - (t.n_nodes - 1)


def percent_faulty(t: MeshTopology, f: FaultSet) -> float:
    if t.link_count == 0:
        return 0.0
    return 100.0 * len(f.faulty) / t.link_count


def faults_for_percent(t: MeshTopology, percent: float) -> int:
    if not 0.0 <= percent <= 100.0:
        raise ConfigurationError(f"fault percentage must be in [0, 100], got {percent}")
    return round(percent / 100.0 * t.link_count)


def _pairs_needed(n_unidirectional: int, victimize: bool) -> int:
    return math.ceil(n_unidirectional / 2) if victimize else n_unidirectional


def _as_links(t: MeshTopology, pairs: Iterable[tuple[int, int]], both: bool) -> set[UniLink]:
    links = set()
    for a, b in pairs:
        d = t.direction_to(a, b)
        links.add(UniLink(a, d))
        if both:
            links.add(UniLink(b, d.opposite))
    return links


def _draw_faults(
    t: MeshTopology,
    pools: list[tuple[list[tuple[int, int]], int]],
    seed: int,
    placement: Placement,
    require_connected: bool,
    victimize: bool,
    base: FaultSet | None,
) -> FaultSet:
    rng = np.random.default_rng(seed)
    existing = base.faulty if base is not None else frozenset()
    for attempt in range(MAX_FAULT_DRAWS):
        drawn: set[UniLink] = set()
        for pool, count in pools:
            if count == 0:
                continue
            picks = rng.choice(len(pool), size=count, replace=False)
            chosen = [pool[int(i)] for i in np.sort(picks)]
            if victimize:
                drawn |= _as_links(t, chosen, both=True)
            else:
                # without victimization a pick is one direction of the physical link
                flips = rng.integers(0, 2, size=count)
                drawn |= _as_links(t, [(b, a) if flip else (a, b) for (a, b), flip in zip(chosen, flips)], both=False)
        faults = FaultSet(frozenset(drawn | existing), placement, seed)
        if not require_connected or is_connected(t.with_faults(faults)):
            if attempt:
                logger.debug("fault draw accepted after %d retries (seed=%d)", attempt, seed)
            return faults
    raise FaultInjectionError(
        f"no connected fault set found in {MAX_FAULT_DRAWS} draws", seed=seed
    )


def _free_pairs(t: MeshTopology, base: FaultSet | None) -> list[tuple[int, int]]:
    taken = base.faulty if base is not None else frozenset()
    free = []
    for a, b in t.bidirectional_links():
        d = t.direction_to(a, b)
        if UniLink(a, d) not in taken and UniLink(b, d.opposite) not in taken:
            free.append((a, b))
    return free


def inject_random_faults(
    t: MeshTopology,
    n_unidirectional: int,
    seed: int,
    require_connected: bool = True,
    victimize: bool = True,
    base: FaultSet | None = None,
) -> FaultSet:
    """
    Draw random link faults.

    With victimization the count is rounded up to whole bidirectional pairs.
    ``base`` holds faults already present; new faults avoid those links and the
    returned set includes them.

    Raises:
        FaultInjectionError: the count cannot be met under the constraints.
    """
    if n_unidirectional < 0:
        raise ConfigurationError("fault count must be non-negative")
    pool = _free_pairs(t, base)
    needed = _pairs_needed(n_unidirectional, victimize)
    if needed > len(pool):
        raise FaultInjectionError(
            f"{n_unidirectional} faults exceed the {len(pool)} available links", seed=seed
        )
    if require_connected:
        already = t.bidirectional_link_count - len(pool)
        if needed + already > max_tolerable_faults(t):
            raise FaultInjectionError(
                f"{n_unidirectional} faults exceed the tolerable maximum "
                f"of {max_tolerable_faults(t)} bidirectional links",
                seed=seed,
            )
    return _draw_faults(t, [(pool, needed)], seed, Placement.RANDOM, require_connected, victimize, base)


def hotspot_region(t: MeshTopology) -> tuple[int, int, int, int]:
    """Centered sub-mesh as (x0, y0, width, height)."""
    w, h = t.kx // 2, t.ky // 2
    return (t.kx - w) // 2, (t.ky - h) // 2, w, h


def inject_hotspot_faults(
    t: MeshTopology,
    n: int,
    seed: int,
    require_connected: bool = True,
    victimize: bool = True,
) -> FaultSet:
    """Place half of the faults inside the central sub-mesh and the rest outside it."""
    if n < 0:
        raise ConfigurationError("fault count must be non-negative")
    x0, y0, w, h = hotspot_region(t)

    def inside(node: int) -> bool:
        x, y = t.coords(node)
        return x0 <= x < x0 + w and y0 <= y < y0 + h

    internal = [(a, b) for a, b in t.bidirectional_links() if inside(a) and inside(b)]
    external = [(a, b) for a, b in t.bidirectional_links() if not (inside(a) and inside(b))]
    needed = _pairs_needed(n, victimize)
    n_in = math.ceil(needed / 2)
    n_out = needed - n_in
    if n_in > len(internal):
        raise FaultInjectionError(
            f"{n_in} hotspot faults exceed the {len(internal)} links inside the sub-mesh", seed=seed
        )
    if n_out > len(external):
        raise FaultInjectionError(
            f"{n_out} faults exceed the {len(external)} links outside the sub-mesh", seed=seed
        )
    if require_connected and needed > max_tolerable_faults(t):
        raise FaultInjectionError(
            f"{n} faults exceed the tolerable maximum of {max_tolerable_faults(t)}", seed=seed
        )
    return _draw_faults(
        t, [(internal, n_in), (external, n_out)], seed, Placement.HOTSPOT,
        require_connected, victimize, None,
    )


def dump_faults(f: FaultSet) -> str:
    lines = [f"# seed {f.seed}", f"# placement {f.placement.value}"]
    lines += [f"{link.src} {link.dir.letter}" for link in sorted(f.faulty)]
    return "\n".join(lines) + "\n"


def load_faults(text: str, topology: MeshTopology | None = None) -> FaultSet:
    """Parse the ``srcIndex dir`` fault file format."""
    seed = 0
    placement = Placement.RANDOM
    links = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            try:
                if len(parts) == 2 and parts[0] == "seed":
                    seed = int(parts[1])
                elif len(parts) == 2 and parts[0] == "placement":
                    placement = Placement(parts[1])
            except ValueError:
                raise ConfigurationError(f"fault file line {line_no}: bad {parts[0]} {parts[1]!r}") from None
            continue
        parts = line.split()
        if len(parts) != 2 or not parts[0].isdigit():
            raise ConfigurationError(f"fault file line {line_no}: expected 'srcIndex dir', got {raw!r}")
        link = UniLink(int(parts[0]), Direction.from_letter(parts[1]))
        if topology is not None and not topology.has_port(link.src, link.dir):
            raise ConfigurationError(f"fault file line {line_no}: link {link} leaves the mesh")
        links.add(link)
    return FaultSet(frozenset(links), placement, seed)
