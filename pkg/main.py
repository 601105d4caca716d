import logging
import sys

from fastapi import FastAPI, Request, status
from fastapi.middleware.cors import CORSMiddleware
from starlette.responses import JSONResponse
from slowapi.errors import RateLimitExceeded

from src.api import utils, solve, inference, simulate
from src.conf import messages
from src.conf.config import settings
from src.domain.errors import EntropicOTError

logging.basicConfig(level=settings.LOG_LEVEL, stream=sys.stderr)
logger = logging.getLogger("entropic_inference")

app = FastAPI(title="Entropic inference", version=settings.TOOL_VERSION)
app.state.limiter = simulate.limiter

app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.CORS_ORIGINS,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(RateLimitExceeded)
async def rate_limit_handler(request: Request, exc: RateLimitExceeded):
    logger.warning(f"Rate limit exceeded for '{request.client.host}' host.")
    return JSONResponse(
        status_code=status.HTTP_429_TOO_MANY_REQUESTS,
        content={"error": messages.RATE_LIMIT_EXCEEDED},
    )


@app.exception_handler(EntropicOTError)
async def entropic_error_handler(request: Request, exc: EntropicOTError):
    logger.warning(f"Rejected {request.url.path}: {exc}")
    return JSONResponse(
        status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
        content={"error": str(exc)},
    )


app.include_router(utils.router, prefix="/api")
app.include_router(solve.router, prefix="/api")
app.include_router(inference.router, prefix="/api")
app.include_router(simulate.router, prefix="/api")

if __name__ == "__main__":
    import uvicorn

    uvicorn.run("main:app", host="127.0.0.1", port=8000, reload=True)
