from fastapi import APIRouter, HTTPException, status
from starlette.concurrency import run_in_threadpool

from src.domain.errors import MissingOptionError
from src.schemas import CIRequest, CIResponse, ColocRequest, ColocResult
from src.services.analysis_service import AnalysisService
from src.services.operators_service import parse_n_mode

router = APIRouter(tags=["inference"])


@router.post("/ci", response_model=CIResponse)
async def confidence_interval(body: CIRequest):
    """
    Function for building a confidence interval for one target

    Args:
        body (CIRequest): Points, target, eta spec, query point, level and truncation

    Returns:
        CIResponse: Estimate, variance and interval

    Raises:
        HTTPException: A flag required by the target is missing
    """
    service = AnalysisService.from_request(body)
    try:
        return await run_in_threadpool(
            service.confidence, body.target, body.eta, body.x0, body.level, parse_n_mode(body.N)
        )
    except MissingOptionError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))


@router.post("/coloc", response_model=ColocResult)
async def coloc(body: ColocRequest):
    """
    Function for the colocalization curve with its simultaneous band

    Args:
        body (ColocRequest): Points, thresholds, level and truncation

    Returns:
        ColocResult: Curve values, covariance and band half-widths

    Raises:
        HTTPException: The solver did not converge
    """
    service = AnalysisService.from_request(body)
    if not service.converged:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail=f"solver did not converge in {service.problem.report.iterations} iterations",
        )
    return await run_in_threadpool(service.coloc, body.thresholds, body.level, parse_n_mode(body.N))
