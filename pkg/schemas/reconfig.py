from pydantic import BaseModel, Field
from typing import Optional, List

from noc.routing import RoutingVariant


class FaultLink(BaseModel):
    src: int = Field(..., ge=0)
    dir: str = Field(..., pattern="^[NESWnesw]$")


class ReconfigRequest(BaseModel):
    kx: int = Field(..., ge=1, le=16)
    ky: int = Field(..., ge=1, le=16)
    faults: List[FaultLink] = []
    initiator: int = Field(0, ge=0)
    start_clock: int = Field(0, ge=0)


class ReconfigResponse(BaseModel):
    duration_cycles: int
    resume_clock: int
    partitions: List[List[int]]
    alerted: List[int]
    border_links: List[List[int]]
    report: str


class CdgRequest(ReconfigRequest):
    variant: RoutingVariant = RoutingVariant.H_XY
    vcs: Optional[int] = None
    include_dot: bool = False


class CdgResponse(BaseModel):
    acyclic: bool
    vertices: int
    edges: int
    witness: List[str] = []
    dot: Optional[str] = None
