from pydantic import ConfigDict
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    SINKHORN_TOL: float = 1e-10
    SINKHORN_MAX_ITER: int = 10000

    ORACLE_TOL: float = 1e-13
    ORACLE_MAX_ITER: int = 100000
    BREGMAN_TOL: float = 1e-12

    CENTERING_TOL: float = 1e-8
    POWER_ITER_MAX: int = 5000
    POWER_ITER_TOL: float = 1e-12

    DEFAULT_LEVEL: float = 0.95
    DEGENERATE_VAR_TOL: float = 1e-16
    DEFAULT_N_MODE: str = "direct"

    MC_WORKERS: int = 1

    LOG_LEVEL: str = "INFO"
    SIMULATE_RATE_LIMIT: str = "5 per minute"
    CORS_ORIGINS: list[str] = ["http://localhost:8000", "http://127.0.0.1:8000"]
    TOOL_VERSION: str = "0.1.0"

    model_config = ConfigDict(
        extra="ignore", env_file=".env", env_file_encoding="utf-8", case_sensitive=True
    )


settings = Settings()
