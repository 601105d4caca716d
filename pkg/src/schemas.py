from datetime import datetime
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

NUsed = int | Literal["direct"]
TargetKind = Literal["cost", "sinkhorn", "plan", "cond", "map", "divergence", "coloc"]


class VarianceEstimate(BaseModel):
    value: float = Field(ge=0)
    lambda_hat: float = Field(gt=0, lt=1)
    scale: float = Field(gt=0)
    method: Literal["cost", "plan", "conditional", "divergence"]
    N_used: NUsed = "direct"

    model_config = ConfigDict(frozen=True)


class ConfidenceInterval(BaseModel):
    estimate: float
    lower: float
    upper: float
    level: float = Field(gt=0, lt=1)
    std_error: float = Field(ge=0)
    degenerate: bool = False

    model_config = ConfigDict(frozen=True)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


class ColocResult(BaseModel):
    thresholds: list[float]
    values: list[float]
    covariance: list[list[float]]
    band: list[float]
    level: float
    lambda_hat: float
    scale: float
    N_used: NUsed = "direct"

    def intervals(self) -> list[tuple[float, float]]:
        return [(v - h, v + h) for v, h in zip(self.values, self.band)]


class MapResult(BaseModel):
    x: list[float]
    estimate: list[float]
    covariance: list[list[float]]
    intervals: list[ConfidenceInterval]
    lambda_hat: float
    scale: float
    N_used: NUsed = "direct"


class SolveReportModel(BaseModel):
    iterations: int
    final_residual: float
    converged: bool
    duality_gap: Optional[float] = None

    model_config = ConfigDict(from_attributes=True)


class RunManifest(BaseModel):
    command: str
    flags: dict
    digests: dict[str, str] = {}
    seed: Optional[int] = None
    version: str
    timestamp: datetime


class MeasureModel(BaseModel):
    atoms: list[list[float]] = Field(min_length=1)
    weights: list[float] = Field(min_length=1)

    model_config = ConfigDict(extra="forbid")

    @field_validator("atoms", mode="before")
    @classmethod
    def wrap_scalars(cls, value):
        if isinstance(value, list):
            return [a if isinstance(a, list) else [a] for a in value]
        return value


class PopulationModel(BaseModel):
    name: str = "population"
    cost: str = "sq_euclidean"
    epsilon: float = Field(default=1.0, gt=0)
    lambda_: float = Field(default=0.5, gt=0, lt=1, alias="lambda")
    P: MeasureModel
    Q: MeasureModel

    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class TargetSpec(BaseModel):
    kind: TargetKind
    eta: Optional[str] = None
    x0: Optional[list[float]] = None
    thresholds: Optional[list[float]] = None

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def check_flags(self):
        if self.kind in ("plan", "cond") and self.eta is None:
            raise ValueError(f"target '{self.kind}' requires eta")
        if self.kind in ("cond", "map") and self.x0 is None:
            raise ValueError(f"target '{self.kind}' requires x0")
        if self.kind == "coloc" and not self.thresholds:
            raise ValueError("target 'coloc' requires thresholds")
        return self

    @property
    def label(self) -> str:
        if self.kind in ("plan", "cond"):
            suffix = f"x0={self.x0}" if self.x0 is not None else ""
            return f"{self.kind}[{self.eta}{',' + suffix if suffix else ''}]"
        if self.kind == "map":
            return f"map[x0={self.x0}]"
        return self.kind


class SimConfig(BaseModel):
    """
    Monte Carlo coverage experiment; ``population`` is a fixture name or an inline population.
    """

    population: PopulationModel | str
    n: int = Field(ge=2)
    m: int = Field(ge=2)
    reps: int = Field(ge=1)
    level: float = Field(default=0.95, gt=0, lt=1)
    targets: list[TargetSpec] = Field(min_length=1)
    seed: int = Field(default=0, ge=0)
    N_mode: NUsed | Literal["auto"] = "direct"
    tol: Optional[float] = Field(default=None, gt=0)
    workers: Optional[int] = Field(default=None, ge=1)
    sizes: Optional[list[int]] = None
    seeds: int = Field(default=50, ge=1)

    model_config = ConfigDict(extra="forbid")


class TargetReport(BaseModel):
    truth: float
    coverage: Optional[float] = Field(default=None, ge=0, le=1)
    width_mean: Optional[float] = None
    bias: Optional[float] = None
    rmse: Optional[float] = None
    ks: Optional[float] = None
    ks_pvalue: Optional[float] = None
    reps_valid: int
    reps_invalid: int
    wall_time: float = 0.0


class CoverageReport(BaseModel):
    n: int
    m: int
    reps: int
    level: float
    seed: int
    N_mode: NUsed | Literal["auto"]
    targets: dict[str, TargetReport]
    reps_invalid: int = 0

    def deterministic_dump(self) -> dict:
        data = self.model_dump()
        for report in data["targets"].values():
            report.pop("wall_time", None)
        return data


class ConsistencyRow(BaseModel):
    n: int
    target: str
    truth: float
    mean_rel_error: float
    seeds_valid: int


class ConsistencyReport(BaseModel):
    N_mode: NUsed | Literal["auto"]
    rows: list[ConsistencyRow]


class DegeneracyReport(BaseModel):
    sizes: list[int]
    variances: dict[int, list[float]]


class PointsRequest(BaseModel):
    x: list[list[float]] = Field(min_length=1)
    y: list[list[float]] = Field(min_length=1)
    cost: str = "sq_euclidean"
    eps: float = Field(default=1.0, gt=0)
    tol: Optional[float] = Field(default=None, gt=0)

    @field_validator("x", "y", mode="before")
    @classmethod
    def wrap_scalars(cls, value):
        if isinstance(value, list):
            return [p if isinstance(p, list) else [p] for p in value]
        return value


class SolveRequest(PointsRequest):
    plan: bool = False


class SolveResponse(BaseModel):
    f: list[float]
    g: list[float]
    cost: float
    sinkhorn_cost: float
    report: SolveReportModel
    plan: Optional[list[list[float]]] = None


class CIRequest(PointsRequest):
    target: Literal["cost", "sinkhorn", "plan", "cond", "map", "divergence"]
    eta: Optional[str] = None
    x0: Optional[list[float]] = None
    level: float = Field(default=0.95, gt=0, lt=1)
    N: str = "direct"


class CIResponse(BaseModel):
    target: str
    estimate: float | list[float]
    variance: Optional[VarianceEstimate] = None
    ci: Optional[ConfidenceInterval] = None
    map: Optional[MapResult] = None
    converged: bool = True


class ColocRequest(PointsRequest):
    thresholds: list[float] = Field(min_length=1)
    level: float = Field(default=0.95, gt=0, lt=1)
    N: str = "direct"


class KernelResult(BaseModel):
    value: float
    variance: float
    kernel_map: str
