from fastapi import APIRouter

from src.conf import messages
from src.conf.config import settings

router = APIRouter(tags=["utils"])


@router.get("/healthchecker")
async def healthchecker():
    """
    Healthchecker for the inference service

    Returns:
        dict: {"message": ..., "version": ...}
    """
    return {"message": messages.SERVICE_HEALTHY, "version": settings.TOOL_VERSION}
