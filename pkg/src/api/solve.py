from fastapi import APIRouter
from starlette.concurrency import run_in_threadpool

from src.schemas import SolveRequest, SolveResponse
from src.services.analysis_service import AnalysisService

router = APIRouter(prefix="/solve", tags=["solve"])


@router.post("", response_model=SolveResponse)
async def solve(body: SolveRequest):
    """
    Function for solving the entropic problem between two point clouds

    Args:
        body (SolveRequest): Points, cost, regularization and tolerance

    Returns:
        SolveResponse: Potentials, costs and solver report; report.converged is False
        when the iteration cap was hit
    """
    service = AnalysisService.from_request(body)
    return await run_in_threadpool(service.solve, body.plan)
