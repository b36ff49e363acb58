from fastapi import APIRouter, HTTPException, status

from noc.errors import HermesError
from noc.reconfig import ReconfigOutcome, run_reconfiguration
from noc.reports import cdg_report, format_reconfig_report
from noc.routing import MIN_VCS, validate_variant
from noc.topology import Direction, FaultSet, MeshTopology, UniLink, build_mesh, victimize_bidirectional
from schemas.reconfig import CdgRequest, CdgResponse, ReconfigRequest, ReconfigResponse

router = APIRouter(prefix="/api/reconfig", tags=["reconfiguration"])


def _topology(request: ReconfigRequest) -> MeshTopology:
    mesh = build_mesh(request.kx, request.ky)
    links = set()
    for fault in request.faults:
        direction = Direction.from_letter(fault.dir)
        if fault.src >= mesh.n_nodes or not mesh.has_port(fault.src, direction):
            raise HTTPException(
                status_code=status.HTTP_400_BAD_REQUEST,
                detail=f"link {fault.src}:{direction.letter} is not in a {request.kx}x{request.ky} mesh",
            )
        links.add(UniLink(fault.src, direction))
    if request.initiator >= mesh.n_nodes:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=f"initiator {request.initiator} outside the mesh")
    return mesh.with_faults(victimize_bidirectional(FaultSet(frozenset(links)), mesh))


def _reconfigure(request: ReconfigRequest) -> tuple[MeshTopology, ReconfigOutcome]:
    topology = _topology(request)
    try:
        return topology, run_reconfiguration(topology, None, request.initiator, request.start_clock)
    except HermesError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))


@router.post("/report", response_model=ReconfigResponse)
async def reconfiguration_report(request: ReconfigRequest):
    """
    Run one epoch and return the text report with partition details.
    """
    topology, outcome = _reconfigure(request)
    return ReconfigResponse(
        duration_cycles=outcome.duration_cycles,
        resume_clock=outcome.resume_clock,
        partitions=[sorted(group) for group in outcome.partition_sets()],
        alerted=sorted(outcome.alerted),
        border_links=[list(link) for link in sorted(outcome.border_links)],
        report=format_reconfig_report(topology, outcome),
    )


@router.post("/cdg", response_model=CdgResponse)
async def dependency_check(request: CdgRequest):
    """
    Channel dependency graph of the routing in force after the epoch.
    """
    vcs = request.vcs if request.vcs is not None else MIN_VCS[request.variant]
    try:
        validate_variant(request.variant, vcs)
    except HermesError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    topology, outcome = _reconfigure(request)
    summary = cdg_report(topology, outcome, request.variant, vcs)
    return CdgResponse(
        acyclic=summary.acyclic,
        vertices=summary.vertices,
        edges=summary.edges,
        witness=[f"{link}/{vc}" for link, vc in summary.witness],
        dot=summary.dot if request.include_dot else None,
    )
