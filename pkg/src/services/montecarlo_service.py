import logging
import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.stats as ss
from pathos.multiprocessing import ProcessPool as Pool

from src.conf import messages
from src.conf.config import settings
from src.domain.errors import ConfigSchemaError, EntropicOTError
from src.domain.models import FinitePopulation
from src.repository.fixtures_repository import FixtureRepository, population_from_model
from src.schemas import (
    ConfidenceInterval,
    ConsistencyReport,
    ConsistencyRow,
    CoverageReport,
    DegeneracyReport,
    SimConfig,
    TargetReport,
    TargetSpec,
)
from src.services.eta_service import parse_eta
from src.services.inference_service import (
    ci,
    coloc_curve,
    divergence_variance,
    map_ci,
    var_cond,
    var_cost,
    var_plan,
)
from src.services.measures_service import from_samples, parse_cost, parse_generator, sample_from
from src.services.oracle_service import PopulationOracle
from src.services.sinkhorn_service import EntropicProblem, divergence_parts

logger = logging.getLogger(__name__)

DEFAULT_LADDER = (100, 500, 2000)
SIMULATION_ETA_KINDS = ("cost", "indicator", "coord")


@dataclass(frozen=True)
class Outcome:
    """
    One component of one target in one replication

    Attributes:
        label (str): component label, e.g. ``cost`` or ``coloc[t=0.5]``
        estimate (float): point estimate
        variance (float): plug-in variance estimate
        interval (ConfidenceInterval): interval at the configured level
    """

    label: str
    estimate: float
    variance: float
    interval: ConfidenceInterval


def child_rng(seed: int, *key: int) -> np.random.Generator:
    """
    Generator for one replication, derived from (seed, key) only.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def resolve_population(config: SimConfig) -> FinitePopulation:
    if isinstance(config.population, str):
        return FixtureRepository().load(config.population)
    return population_from_model(config.population)


def validate_targets(targets: list[TargetSpec]) -> None:
    """
    Raises:
        ConfigSchemaError: an eta spec refers to a fixed table
    """
    bad = [
        f"targets.{i}.eta"
        for i, t in enumerate(targets)
        if t.eta is not None and parse_eta_kind(t.eta) not in SIMULATION_ETA_KINDS
    ]
    if bad:
        raise ConfigSchemaError(messages.CSV_ETA_IN_SIMULATION, bad)


def parse_eta_kind(spec: str) -> str:
    try:
        return parse_eta(spec).kind
    except EntropicOTError:
        return "invalid"


def _coloc_label(t: float) -> str:
    return f"coloc[t={t:g}]"


def target_truths(oracle: PopulationOracle, target: TargetSpec) -> list[tuple[str, float, float]]:
    """
    Population value and asymptotic variance for every component of a target.

    Returns:
        list of (label, truth, sigma2), in the order ``evaluate_target`` emits
    """
    label = target.label
    if target.kind == "cost":
        return [(label, oracle.exact_cost(), oracle.exact_sigma_cost())]
    if target.kind == "sinkhorn":
        return [(label, oracle.exact_sinkhorn_cost(), oracle.exact_sigma_plan(oracle.ctx.cost_values))]
    if target.kind == "plan":
        return [(label, oracle.exact_plan_expectation(target.eta), oracle.exact_sigma_plan(target.eta))]
    if target.kind == "cond":
        x0 = np.asarray(target.x0, dtype=float)
        row = oracle.eta_row(x0, target.eta)
        return [(label, oracle.exact_cond_expectation(x0, row), oracle.exact_sigma_cond(x0, row))]
    if target.kind == "map":
        x0 = np.asarray(target.x0, dtype=float)
        values = oracle.exact_map(x0)
        cov = oracle.exact_map_covariance(x0)
        return [(f"{label}[{k}]", float(values[k]), float(cov[k, k])) for k in range(len(values))]
    if target.kind == "divergence":
        return [(label, oracle.exact_divergence(), oracle.exact_sigma_divergence())]
    values = oracle.exact_coloc(target.thresholds)
    cov = oracle.exact_coloc_covariance(target.thresholds)
    return [
        (_coloc_label(t), float(values[i]), float(cov[i, i])) for i, t in enumerate(target.thresholds)
    ]


def evaluate_target(
    problem: EntropicProblem,
    target: TargetSpec,
    level: float,
    N,
    tol: float | None = None,
) -> list[Outcome] | None:
    """
    Estimates and intervals for one target on one empirical problem.

    Returns:
        list[Outcome], or None when a solve behind the target did not converge
    """
    label = target.label
    P, Q, ctx = problem.P, problem.Q, problem.ctx
    if target.kind == "divergence":
        parts = divergence_parts(P, Q, problem.cost, problem.epsilon, tol)
        if not parts.converged:
            return None
        estimate = parts.value()
        var = divergence_variance(parts)
        return [Outcome(label, estimate, var.value, ci(estimate, var, level))]

    ops = problem.operators
    if target.kind == "cost":
        estimate = problem.entropic_cost()
        var = var_cost(problem.potentials, P, Q)
        return [Outcome(label, estimate, var.value, ci(estimate, var, level))]
    if target.kind in ("sinkhorn", "plan"):
        eta = ctx.cost_values
        if target.kind == "plan":
            eta = parse_eta(target.eta).table(P.atoms, Q.atoms, ctx.cost_values)
        estimate = problem.plan_expectation(eta)
        var = var_plan(ops, eta, N)
        return [Outcome(label, estimate, var.value, ci(estimate, var, level))]
    if target.kind == "cond":
        x0 = np.asarray(target.x0, dtype=float)
        row = parse_eta(target.eta).row(x0, Q.atoms, problem.cost.row(x0, Q.atoms))
        estimate = problem.cond_expectation(x0, row)
        var = var_cond(ops, problem.potentials, x0, row, Q, problem.cost, N)
        return [Outcome(label, estimate, var.value, ci(estimate, var, level))]
    if target.kind == "map":
        result = map_ci(ops, problem.potentials, np.asarray(target.x0, dtype=float), Q, problem.cost, level, N)
        return [
            Outcome(f"{label}[{k}]", interval.estimate, result.covariance[k][k], interval)
            for k, interval in enumerate(result.intervals)
        ]
    result = coloc_curve(ops, ctx.cost_values, target.thresholds, level, N)
    outcomes = []
    for i, t in enumerate(result.thresholds):
        value, half = result.values[i], result.band[i]
        variance = max(result.covariance[i][i], 0.0)
        interval = ConfidenceInterval(
            estimate=value,
            lower=value - half,
            upper=value + half,
            level=level,
            std_error=math.sqrt(variance) / result.scale,
            degenerate=variance <= settings.DEGENERATE_VAR_TOL,
        )
        outcomes.append(Outcome(_coloc_label(t), value, variance, interval))
    return outcomes


def replicate(
    pop: FinitePopulation,
    targets: list[TargetSpec],
    n: int,
    m: int,
    rng: np.random.Generator,
    level: float,
    N,
    tol: float | None,
) -> tuple[list[Outcome] | None, dict[str, float]]:
    """
    Draw one pair of samples, solve once and evaluate every target.

    Returns:
        (outcomes or None when the replication is invalid, seconds spent per target)
    """
    X = sample_from(parse_generator(pop.P), n, rng)
    Y = sample_from(parse_generator(pop.Q), m, rng)
    problem = EntropicProblem(from_samples(X), from_samples(Y), parse_cost(pop.cost_name), pop.ctx.epsilon, tol)
    timings: dict[str, float] = {}
    try:
        if not problem.report.converged:
            return None, timings
        outcomes: list[Outcome] = []
        for target in targets:
            started = time.perf_counter()
            result = evaluate_target(problem, target, level, N, tol)
            timings[target.label] = time.perf_counter() - started
            if result is None:
                return None, timings
            outcomes.extend(result)
    except EntropicOTError as e:
        logger.warning("Replication failed: %s", e)
        return None, timings
    return outcomes, timings


def _coverage_job(args: tuple) -> tuple[int, list[Outcome] | None, dict[str, float]]:
    config, pop, r = args
    outcomes, timings = replicate(
        pop, config.targets, config.n, config.m, child_rng(config.seed, r), config.level, config.N_mode, config.tol
    )
    return r, outcomes, timings


def _summarize(truth: float, outcomes: list[Outcome], invalid: int, wall: float) -> TargetReport:
    if not outcomes:
        return TargetReport(truth=truth, reps_valid=0, reps_invalid=invalid, wall_time=wall)
    estimates = np.array([o.estimate for o in outcomes])
    errors = estimates - truth
    pivots = np.array([(o.estimate - truth) / o.interval.std_error for o in outcomes if o.interval.std_error > 0])
    ks, ks_pvalue = (None, None)
    if pivots.size:
        result = ss.kstest(pivots, "norm")
        ks, ks_pvalue = float(result.statistic), float(result.pvalue)
    return TargetReport(
        truth=truth,
        coverage=float(np.mean([o.interval.contains(truth) for o in outcomes])),
        width_mean=float(np.mean([o.interval.width for o in outcomes])),
        bias=float(errors.mean()),
        rmse=float(np.sqrt(np.mean(errors**2))),
        ks=ks,
        ks_pvalue=ks_pvalue,
        reps_valid=len(outcomes),
        reps_invalid=invalid,
        wall_time=wall,
    )


def run_coverage(
    config: SimConfig, population: FinitePopulation | None = None, workers: int | None = None
) -> CoverageReport:
    """
    Coverage experiment against the oracle truths of a finite population.

    Replication r samples with a generator derived from (config.seed, r)
    alone, so serial and parallel runs produce identical reports. Replications
    whose solves fail to converge are excluded and counted.

    Args:
        config (SimConfig): experiment definition
        population (FinitePopulation, optional): overrides config.population
        workers (int, optional): process count. Defaults to config.workers or settings.MC_WORKERS.

    Returns:
        CoverageReport
    """
    validate_targets(config.targets)
    pop = population or resolve_population(config)
    oracle = PopulationOracle(pop)
    truths = [(target.label, *item) for target in config.targets for item in target_truths(oracle, target)]
    workers = workers or config.workers or settings.MC_WORKERS

    jobs = [(config, pop, r) for r in range(config.reps)]
    if workers > 1:
        pool = Pool(workers)
        try:
            pool.restart()
        except AssertionError:
            pass
        try:
            results = pool.map(_coverage_job, jobs)
        finally:
            pool.close()
            pool.join()
            pool.clear()
    else:
        results = [_coverage_job(job) for job in jobs]
    results.sort(key=lambda item: item[0])

    valid = [outcomes for _, outcomes, _ in results if outcomes is not None]
    invalid = len(results) - len(valid)
    if invalid:
        logger.warning("%d of %d replications excluded (solver did not converge)", invalid, config.reps)

    spent: dict[str, float] = {}
    for _, _, timings in results:
        for key, seconds in timings.items():
            spent[key] = spent.get(key, 0.0) + seconds

    reports = {}
    for index, (target_label, label, truth, _) in enumerate(truths):
        outcomes = [rep[index] for rep in valid]
        reports[label] = _summarize(truth, outcomes, invalid, spent.get(target_label, 0.0))
        logger.info(
            "%s: coverage %s over %d replications", label, reports[label].coverage, reports[label].reps_valid
        )
    return CoverageReport(
        n=config.n,
        m=config.m,
        reps=config.reps,
        level=config.level,
        seed=config.seed,
        N_mode=config.N_mode,
        targets=reports,
        reps_invalid=invalid,
    )


def run_consistency(
    config: SimConfig,
    population: FinitePopulation | None = None,
    sizes: list[int] | None = None,
    seeds: int | None = None,
) -> ConsistencyReport:
    """
    Mean relative error |sigma_hat^2 - sigma^2| / sigma^2 of every target along a ladder n = m.

    When the true variance is zero the absolute error is reported instead.
    """
    validate_targets(config.targets)
    pop = population or resolve_population(config)
    oracle = PopulationOracle(pop)
    truths = [item for target in config.targets for item in target_truths(oracle, target)]
    sizes = list(sizes or config.sizes or DEFAULT_LADDER)
    seeds = seeds or config.seeds

    rows = []
    for size in sizes:
        errors: list[list[float]] = [[] for _ in truths]
        for s in range(seeds):
            outcomes, _ = replicate(
                pop, config.targets, size, size, child_rng(config.seed, size, s), config.level, config.N_mode, config.tol
            )
            if outcomes is None:
                continue
            for index, (_, _, sigma2) in enumerate(truths):
                gap = abs(outcomes[index].variance - sigma2)
                errors[index].append(gap / sigma2 if sigma2 > settings.DEGENERATE_VAR_TOL else gap)
        for index, (label, _, sigma2) in enumerate(truths):
            mean_error = float(np.mean(errors[index])) if errors[index] else float("nan")
            rows.append(
                ConsistencyRow(n=size, target=label, truth=sigma2, mean_rel_error=mean_error, seeds_valid=len(errors[index]))
            )
            logger.info("n=%d %s: mean relative error %.4f", size, label, mean_error)
    return ConsistencyReport(N_mode=config.N_mode, rows=rows)


def run_degeneracy(
    pop: FinitePopulation,
    sizes: tuple[int, ...] = (100, 2000),
    seeds: int = 50,
    seed: int = 0,
    tol: float | None = None,
) -> DegeneracyReport:
    """
    Plug-in divergence variance per seed at each sample size.

    Intended for populations with P = Q, where the linear term vanishes and
    the estimates shrink faster than the parametric rate.
    """
    cost = parse_cost(pop.cost_name)
    gen_p, gen_q = parse_generator(pop.P), parse_generator(pop.Q)
    variances: dict[int, list[float]] = {}
    for size in sizes:
        values = []
        for s in range(seeds):
            rng = child_rng(seed, size, s)
            P = from_samples(sample_from(gen_p, size, rng))
            Q = from_samples(sample_from(gen_q, size, rng))
            parts = divergence_parts(P, Q, cost, pop.ctx.epsilon, tol)
            values.append(divergence_variance(parts).value)
        variances[size] = values
    return DegeneracyReport(sizes=list(sizes), variances=variances)
