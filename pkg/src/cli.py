import json
import logging
import math
import re
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Annotated, Optional

import typer
from pydantic import BaseModel, ValidationError

from src.conf import messages
from src.conf.config import settings
from src.domain.errors import ConfigSchemaError, EntropicOTError
from src.repository.samples_repository import file_digest, read_text
from src.schemas import RunManifest, SimConfig
from src.services.analysis_service import AnalysisService
from src.services.measures_service import from_samples, load_samples
from src.services.montecarlo_service import run_consistency, run_coverage
from src.services.operators_service import parse_n_mode, resolve_n_mode

logger = logging.getLogger(__name__)

app = typer.Typer(help="Entropic optimal transport with asymptotic confidence intervals.")

EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

_FLOAT_TAG = "\x00f:"
_FLOAT_PATTERN = re.compile(r'"\\u0000f:([^"]*)"')

XOption = Annotated[Path, typer.Option("--x", help="Samples of the first measure")]
YOption = Annotated[Path, typer.Option("--y", help="Samples of the second measure")]
CostOption = Annotated[str, typer.Option("--cost", help="Cost name, e.g. sq_euclidean or lp:3")]
EpsOption = Annotated[float, typer.Option("--eps", help="Regularization strength")]
TolOption = Annotated[Optional[float], typer.Option("--tol", help="Sinkhorn residual tolerance")]
FormatOption = Annotated[str, typer.Option("--format", help="csv or json")]
HeaderOption = Annotated[bool, typer.Option("--header", help="Skip the first CSV line")]
LevelOption = Annotated[float, typer.Option("--level", help="Confidence level in (0, 1)")]
NOption = Annotated[str, typer.Option("--N", help="Neumann truncation: direct, auto or an integer")]


def _tag_floats(value):
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        return f"{_FLOAT_TAG}{value:.17g}" if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: _tag_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_tag_floats(v) for v in value]
    return value


def dumps(payload: dict) -> str:
    """
    JSON text with every float written to 17 significant digits.
    """
    text = json.dumps(_tag_floats(payload), indent=2)
    return _FLOAT_PATTERN.sub(r"\1", text)


def manifest(command: str, flags: dict, inputs: list[Path] = (), seed: int | None = None) -> RunManifest:
    return RunManifest(
        command=command,
        flags={k: str(v) if isinstance(v, Path) else v for k, v in flags.items()},
        digests={str(p): file_digest(p) for p in inputs},
        seed=seed,
        version=settings.TOOL_VERSION,
        timestamp=datetime.now(timezone.utc),
    )


def emit(result: BaseModel | dict, run: RunManifest, converged: bool = True) -> None:
    payload = result.model_dump(mode="json") if isinstance(result, BaseModel) else dict(result)
    payload["manifest"] = run.model_dump(mode="json")
    typer.echo(dumps(payload))
    if not converged:
        raise typer.Exit(EXIT_NOT_CONVERGED)


def fail(message: str) -> None:
    typer.echo(message, err=True)
    raise typer.Exit(EXIT_ERROR)


def parse_floats(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        fail(messages.INVALID_NUMBER_LIST.format(text=text))


def _service(x: Path, y: Path, cost: str, eps: float, tol: float | None, fmt: str, header: bool) -> AnalysisService:
    P = from_samples(load_samples(x, fmt, header=header))
    Q = from_samples(load_samples(y, fmt, header=header))
    return AnalysisService(P, Q, cost, eps, tol)


def load_config(path: Path) -> SimConfig:
    """
    Raises:
        ConfigSchemaError: the file violates the SimConfig schema, listing offending keys
    """
    try:
        return SimConfig.model_validate_json(read_text(path))
    except ValidationError as e:
        keys = sorted({".".join(str(p) for p in err["loc"]) or "<root>" for err in e.errors()})
        raise ConfigSchemaError(messages.CONFIG_SCHEMA_VIOLATION.format(keys=", ".join(keys)), keys)


@app.callback()
def configure():
    logging.basicConfig(level=settings.LOG_LEVEL, stream=sys.stderr)


@app.command()
def solve(
    x: XOption,
    y: YOption,
    cost: CostOption = "sq_euclidean",
    eps: EpsOption = 1.0,
    tol: TolOption = None,
    fmt: FormatOption = "csv",
    header: HeaderOption = False,
    plan: Annotated[bool, typer.Option("--plan", help="Include the transport plan")] = False,
):
    """
    Solve the entropic problem between two sample files.
    """
    flags = dict(x=x, y=y, cost=cost, eps=eps, tol=tol, format=fmt, header=header, plan=plan)
    try:
        service = _service(x, y, cost, eps, tol, fmt, header)
        result = service.solve(with_plan=plan)
        run = manifest("solve", flags, [x, y])
    except (EntropicOTError, OSError) as e:
        fail(str(e))
    emit(result, run, converged=result.report.converged)


@app.command("ci")
def confidence_interval(
    x: XOption,
    y: YOption,
    target: Annotated[str, typer.Option("--target", help="cost, sinkhorn, plan, cond, map or divergence")],
    eta: Annotated[Optional[str], typer.Option("--eta", help="cost, indicator:t, coord:k or a CSV table")] = None,
    x0: Annotated[Optional[str], typer.Option("--x0", help="Query point, comma-separated")] = None,
    cost: CostOption = "sq_euclidean",
    eps: EpsOption = 1.0,
    tol: TolOption = None,
    level: LevelOption = 0.95,
    n_mode: NOption = "direct",
    fmt: FormatOption = "csv",
    header: HeaderOption = False,
):
    """
    Point estimate, plug-in variance and confidence interval for one target.
    """
    flags = dict(x=x, y=y, target=target, eta=eta, x0=x0, cost=cost, eps=eps, tol=tol, level=level, N=n_mode)
    try:
        service = _service(x, y, cost, eps, tol, fmt, header)
        resolve_n_mode(parse_n_mode(n_mode), 1, 1)
        point = parse_floats(x0) if x0 is not None else None
        result = service.confidence(target, eta=eta, x0=point, level=level, N=parse_n_mode(n_mode))
        inputs = [x, y] + ([Path(eta)] if eta and Path(eta).is_file() else [])
        run = manifest("ci", flags, inputs)
    except (EntropicOTError, OSError) as e:
        fail(str(e))
    emit(result, run, converged=result.converged)


@app.command()
def coloc(
    x: XOption,
    y: YOption,
    thresholds: Annotated[str, typer.Option("--thresholds", help="Ascending thresholds, comma-separated")],
    cost: CostOption = "sq_euclidean",
    eps: EpsOption = 1.0,
    tol: TolOption = None,
    level: LevelOption = 0.95,
    n_mode: NOption = "direct",
    fmt: FormatOption = "csv",
    header: HeaderOption = False,
):
    """
    Colocalization curve with covariance and simultaneous band.
    """
    flags = dict(x=x, y=y, thresholds=thresholds, cost=cost, eps=eps, tol=tol, level=level, N=n_mode)
    try:
        service = _service(x, y, cost, eps, tol, fmt, header)
        if not service.converged:
            emit(service.solve(), manifest("coloc", flags, [x, y]), converged=False)
        result = service.coloc(parse_floats(thresholds), level=level, N=parse_n_mode(n_mode))
        run = manifest("coloc", flags, [x, y])
    except (EntropicOTError, OSError) as e:
        fail(str(e))
    emit(result, run)


@app.command()
def divergence(
    x: XOption,
    y: YOption,
    cost: CostOption = "sq_euclidean",
    eps: EpsOption = 1.0,
    tol: TolOption = None,
    level: LevelOption = 0.95,
    fmt: FormatOption = "csv",
    header: HeaderOption = False,
):
    """
    Sinkhorn divergence with its confidence interval.
    """
    flags = dict(x=x, y=y, cost=cost, eps=eps, tol=tol, level=level)
    try:
        service = _service(x, y, cost, eps, tol, fmt, header)
        result = service.confidence("divergence", level=level)
        run = manifest("divergence", flags, [x, y])
    except (EntropicOTError, OSError) as e:
        fail(str(e))
    emit(result, run, converged=result.converged)


@app.command()
def kernel(
    x: XOption,
    y: YOption,
    u: Annotated[Path, typer.Option("--u", help="Reference samples the potentials are solved against")],
    cost: CostOption = "sq_euclidean",
    eps: EpsOption = 1.0,
    tol: TolOption = None,
    kernel_map: Annotated[str, typer.Option("--map", help="gaussian, laplace or inverse_multiquadric")] = "gaussian",
    fmt: FormatOption = "csv",
    header: HeaderOption = False,
):
    """
    Sinkhorn kernel point estimate.
    """
    flags = dict(x=x, y=y, u=u, cost=cost, eps=eps, tol=tol, map=kernel_map)
    try:
        service = _service(x, y, cost, eps, tol, fmt, header)
        U = from_samples(load_samples(u, fmt, header=header))
        result = service.kernel(U, kernel_map)
        run = manifest("kernel", flags, [x, y, u])
    except (EntropicOTError, OSError) as e:
        fail(str(e))
    emit(result, run)


@app.command()
def simulate(
    config: Annotated[Path, typer.Option("--config", help="Simulation config JSON")],
    workers: Annotated[Optional[int], typer.Option("--workers", help="Process count")] = None,
):
    """
    Monte Carlo coverage experiment against finite-population truths.
    """
    try:
        sim = load_config(config)
        report = run_coverage(sim, workers=workers)
        run = manifest("simulate", dict(config=config, workers=workers), [config], seed=sim.seed)
    except (EntropicOTError, OSError) as e:
        fail(str(e))
    emit(report, run)


@app.command()
def consistency(
    config: Annotated[Path, typer.Option("--config", help="Simulation config JSON")],
    sizes: Annotated[Optional[str], typer.Option("--sizes", help="Ladder of n = m, comma-separated")] = None,
    seeds: Annotated[Optional[int], typer.Option("--seeds", help="Seeds per rung")] = None,
):
    """
    Relative error of the variance estimators along a sample-size ladder.
    """
    try:
        sim = load_config(config)
        ladder = [int(s) for s in parse_floats(sizes)] if sizes else None
        report = run_consistency(sim, sizes=ladder, seeds=seeds)
        run = manifest("consistency", dict(config=config, sizes=sizes, seeds=seeds), [config], seed=sim.seed)
    except (EntropicOTError, OSError) as e:
        fail(str(e))
    emit(report, run)


@app.command()
def schema():
    """
    Print the JSON schema of simulation configs.
    """
    typer.echo(json.dumps(SimConfig.model_json_schema(by_alias=True), indent=2))


if __name__ == "__main__":
    app()
