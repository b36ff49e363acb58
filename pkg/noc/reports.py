"""Plain-text dumps of reconfiguration results and channel dependency graphs."""

from dataclasses import dataclass

from noc.reconfig import PortMark, ReconfigOutcome, RoutingTable
from noc.routing import RoutingVariant, build_cdg, cdg_to_dot, check_acyclic
from noc.topology import DIRECTIONS, MeshTopology


def format_marks(t: MeshTopology, node: int, marks) -> str:
    """One token per N E S W port: ``.`` no port, ``X`` faulty, else the mark."""
    tokens = []
    for d in DIRECTIONS:
        if not t.has_port(node, d):
            tokens.append(".")
        elif not t.is_healthy(node, d):
            tokens.append("X")
        else:
            tokens.append(PortMark(marks[d]).value)
    return " ".join(tokens)


def format_table(table: RoutingTable) -> str:
    parts = []
    for dst, entry in enumerate(table.entries):
        if entry:
            parts.append(f"{dst}:" + "".join(d.letter for d in sorted(entry)))
    return " ".join(parts)


def format_reconfig_report(t: MeshTopology, outcome: ReconfigOutcome) -> str:
    lines = [
        f"mesh {t.kx}x{t.ky}",
        f"initiator {outcome.initiator}",
        f"cycles {outcome.start_clock} {outcome.resume_clock}",
        f"duration {outcome.duration_cycles}",
        "marks",
    ]
    for node in range(t.n_nodes):
        lines.append(f"node {node}: {format_marks(t, node, outcome.marks[node])}")
    lines.append("tables")
    for table in outcome.tables:
        lines.append(f"node {table.owner}: {format_table(table)}".rstrip())
    lines.append("alerted " + " ".join(str(n) for n in sorted(outcome.alerted)))
    lines.append("borders " + " ".join(f"{a}-{b}" for a, b in sorted(outcome.border_links)))
    lines.append("partitions")
    for group in outcome.partition_sets():
        lines.append(" ".join(str(n) for n in sorted(group)))
    lines.append("labels " + " ".join(str(outcome.partitions[n]) for n in range(t.n_nodes)))
    return "\n".join(line.rstrip() for line in lines) + "\n"


@dataclass(frozen=True)
class CdgSummary:
    acyclic: bool
    witness: list
    vertices: int
    edges: int
    dot: str


def cdg_report(t: MeshTopology, outcome: ReconfigOutcome, variant: RoutingVariant, vcs: int) -> CdgSummary:
    """Acyclicity verdict, cycle witness and DOT text for the routing in force."""
    graph = build_cdg(t, None, outcome.tables, variant, vcs)
    acyclic, witness = check_acyclic(graph)
    return CdgSummary(acyclic, witness, graph.number_of_nodes(), graph.number_of_edges(), cdg_to_dot(graph))
