from fastapi import APIRouter

import noc
from schemas.experiments import HealthResponse

router = APIRouter(prefix="/api", tags=["home"])


@router.get("/health", response_model=HealthResponse)
async def health():
    return HealthResponse(status="ok", version=noc.__version__)
