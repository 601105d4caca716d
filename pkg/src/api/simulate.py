from fastapi import APIRouter, Request
from slowapi import Limiter
from slowapi.util import get_remote_address
from starlette.concurrency import run_in_threadpool

from src.conf.config import settings
from src.schemas import CoverageReport, SimConfig
from src.services.montecarlo_service import run_coverage

router = APIRouter(prefix="/simulate", tags=["simulate"])
limiter = Limiter(key_func=get_remote_address)


@router.post("", response_model=CoverageReport)
@limiter.limit(settings.SIMULATE_RATE_LIMIT)
async def simulate(request: Request, body: SimConfig):
    """
    Function for running a Monte Carlo coverage experiment.
    The route is rate limited since one call can run thousands of solves.

    Args:
        request (Request): Request
        body (SimConfig): Simulation config

    Returns:
        CoverageReport: Per-target coverage, width, bias, rmse and KS statistics
    """
    return await run_in_threadpool(run_coverage, body)
