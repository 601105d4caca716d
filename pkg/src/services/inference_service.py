import math
from typing import Callable

import numpy as np
import scipy.stats as ss

from src.conf import messages
from src.conf.config import settings
from src.domain.errors import (
    CoordinateDataError,
    InvalidLevelError,
    InvalidThresholdsError,
    UnknownKernelMapError,
)
from src.domain.models import DiscreteMeasure, EtaHat, OperatorContext, PotentialPair
from src.schemas import ColocResult, ConfidenceInterval, MapResult, VarianceEstimate
from src.services.measures_service import CostFunction, parse_cost
from src.services.operators_service import (
    NMode,
    apply_AP,
    apply_AQ,
    neumann_solve,
    resolve_n_mode,
)
from src.services.sinkhorn_service import (
    DivergenceParts,
    EntropicProblem,
    EtaRow,
    conditional_density,
    divergence_parts,
    eta_values,
)

KERNEL_MAPS: dict[str, Callable[[float], float]] = {
    "gaussian": lambda t: math.exp(-t * t),
    "laplace": lambda t: math.exp(-t),
    "inverse_multiquadric": lambda t: 1.0 / math.sqrt(1.0 + t * t),
}


def sample_scaling(n: int, m: int) -> tuple[float, float]:
    """
    (lambda_hat, scale) = (m / (n + m), sqrt(nm / (n + m))).
    """
    return m / (n + m), math.sqrt(n * m / (n + m))


def weighted_var(weights: np.ndarray, values: np.ndarray) -> float:
    centered = values - weights @ values
    return max(float(weights @ (centered * centered)), 0.0)


def weighted_cov(weights: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """
    Covariance table of the rows of a (k, n) array under the given weights.
    """
    rows = np.atleast_2d(rows)
    centered = rows - (rows @ weights)[:, None]
    cov = (centered * weights[None, :]) @ centered.T
    return 0.5 * (cov + cov.T)


def _used(N: NMode | None, n: int, m: int) -> NMode:
    return resolve_n_mode(N, n, m)


def var_cost(pot: PotentialPair, P: DiscreteMeasure, Q: DiscreteMeasure) -> VarianceEstimate:
    """
    Plug-in variance of the entropic cost, lambda Var_P[eps f] + (1 - lambda) Var_Q[eps g].
    """
    lam, scale = sample_scaling(len(P), len(Q))
    value = lam * weighted_var(P.weights, pot.f_cost) + (1 - lam) * weighted_var(Q.weights, pot.g_cost)
    return VarianceEstimate(value=value, lambda_hat=lam, scale=scale, method="cost")


def build_eta_hat(ctx: OperatorContext, eta: np.ndarray) -> EtaHat:
    weighted = ctx.xi * np.asarray(eta, dtype=float)
    return EtaHat(eta_x=weighted @ ctx.w, eta_y=ctx.v @ weighted)


def plan_residuals(ctx: OperatorContext, eta: np.ndarray, N: NMode | None = None) -> tuple[np.ndarray, np.ndarray]:
    """
    Neumann-solved residual directions of a plan functional.

    Returns:
        tuple[np.ndarray, np.ndarray]: (I - A_Q A_P)^{-1} a over the first
        support and (I - A_P A_Q)^{-1} b over the second, where
        a = eta_x - A_Q eta_y and b = eta_y - A_P eta_x
    """
    eta_hat = build_eta_hat(ctx, eta)
    a = eta_hat.eta_x - apply_AQ(ctx, eta_hat.eta_y)
    b = eta_hat.eta_y - apply_AP(ctx, eta_hat.eta_x)
    return neumann_solve(ctx, a, "P", N), neumann_solve(ctx, b, "Q", N)


def var_plan(ctx: OperatorContext, eta: np.ndarray, N: NMode | None = None) -> VarianceEstimate:
    """
    Plug-in variance of a plan expectation int eta dpi.

    Args:
        ctx (OperatorContext): operators of the empirical plan
        eta (np.ndarray): bounded n x m evaluation table
        N (int | str, optional): Neumann truncation, ``auto`` or ``direct``

    Returns:
        VarianceEstimate

    Raises:
        NotCenteredError: the plan does not have the right marginals
    """
    lam, scale = sample_scaling(ctx.n, ctx.m)
    solved_a, solved_b = plan_residuals(ctx, eta, N)
    value = lam * weighted_var(ctx.v, solved_a) + (1 - lam) * weighted_var(ctx.w, solved_b)
    return VarianceEstimate(
        value=value, lambda_hat=lam, scale=scale, method="plan", N_used=_used(N, ctx.n, ctx.m)
    )


def cond_residuals(
    ctx: OperatorContext,
    pot: PotentialPair,
    x,
    eta_rows: np.ndarray,
    Q: DiscreteMeasure,
    cost_fn: str | CostFunction,
    N: NMode | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Solved directions of conditional functionals at x, one per row of ``eta_rows``.

    Returns:
        tuple: estimates (k,), first-side parts (k, n), second-side parts (k, m)
    """
    eta_rows = np.atleast_2d(np.asarray(eta_rows, dtype=float))
    density = conditional_density(pot, x, Q, cost_fn)
    estimates = (eta_rows * density[None, :]) @ Q.weights
    h = (eta_rows - estimates[:, None]) * density[None, :]
    first = np.array([neumann_solve(ctx, apply_AQ(ctx, row), "P", N) for row in h])
    second = np.array([neumann_solve(ctx, row, "Q", N) for row in h])
    return estimates, first, second


def var_cond(
    ctx: OperatorContext,
    pot: PotentialPair,
    x,
    eta_row: EtaRow,
    Q: DiscreteMeasure,
    cost_fn: str | CostFunction,
    N: NMode | None = None,
) -> VarianceEstimate:
    """
    Plug-in variance of the conditional expectation E_pi[eta(X, Y) | X = x].
    """
    lam, scale = sample_scaling(ctx.n, ctx.m)
    _, first, second = cond_residuals(ctx, pot, x, eta_values(eta_row, Q), Q, cost_fn, N)
    value = lam * weighted_var(ctx.v, first[0]) + (1 - lam) * weighted_var(ctx.w, second[0])
    return VarianceEstimate(
        value=value, lambda_hat=lam, scale=scale, method="conditional", N_used=_used(N, ctx.n, ctx.m)
    )


def normal_quantile(level: float) -> float:
    """
    z_{(1 + level) / 2} of the standard normal.
    """
    if not 0.0 < level < 1.0:
        raise InvalidLevelError(messages.INVALID_LEVEL)
    return float(ss.norm.ppf(0.5 * (1.0 + level)))


def ci(estimate: float, var: VarianceEstimate, level: float | None = None) -> ConfidenceInterval:
    """
    Asymptotic interval estimate +- z sqrt(var) / sqrt(nm / (n + m)).

    A variance at or below ``settings.DEGENERATE_VAR_TOL`` gives the
    zero-width interval [estimate, estimate] flagged as degenerate.
    """
    level = settings.DEFAULT_LEVEL if level is None else level
    z = normal_quantile(level)
    if var.value <= settings.DEGENERATE_VAR_TOL:
        return ConfidenceInterval(
            estimate=estimate, lower=estimate, upper=estimate, level=level, std_error=0.0, degenerate=True
        )
    std_error = math.sqrt(var.value) / var.scale
    half = z * std_error
    return ConfidenceInterval(
        estimate=estimate, lower=estimate - half, upper=estimate + half, level=level, std_error=std_error
    )


def divergence_variance(parts: DivergenceParts) -> VarianceEstimate:
    """
    Linearized variance of S(P, Q) - (S(P, P) + S(Q, Q)) / 2.

    The first-side direction is f_PQ - (f_PP + g_PP) / 2 on P's atoms and the
    second-side direction g_PQ - (f_QQ + g_QQ) / 2 on Q's atoms.
    """
    P, Q = parts.pq.P, parts.pq.Q
    lam, scale = sample_scaling(len(P), len(Q))
    pq, pp, qq = parts.pq.potentials, parts.pp.potentials, parts.qq.potentials
    side_p = pq.f_cost - 0.5 * (pp.f_cost + pp.g_cost)
    side_q = pq.g_cost - 0.5 * (qq.f_cost + qq.g_cost)
    value = lam * weighted_var(P.weights, side_p) + (1 - lam) * weighted_var(Q.weights, side_q)
    return VarianceEstimate(value=value, lambda_hat=lam, scale=scale, method="divergence")


def divergence_ci(
    P: DiscreteMeasure,
    Q: DiscreteMeasure,
    cost_fn: str | CostFunction,
    epsilon: float,
    level: float | None = None,
    tol: float | None = None,
) -> tuple[float, ConfidenceInterval]:
    parts = divergence_parts(P, Q, cost_fn, epsilon, tol)
    estimate = parts.value()
    return estimate, ci(estimate, divergence_variance(parts), level)


def map_ci(
    ctx: OperatorContext,
    pot: PotentialPair,
    x,
    Q: DiscreteMeasure,
    cost_fn: str | CostFunction,
    level: float | None = None,
    N: NMode | None = None,
) -> MapResult:
    """
    Per-coordinate intervals for the entropic map at x with the d x d covariance table.
    """
    if not Q.is_coordinate:
        raise CoordinateDataError(messages.MAP_REQUIRES_COORDINATES)
    lam, scale = sample_scaling(ctx.n, ctx.m)
    estimates, first, second = cond_residuals(ctx, pot, x, Q.atoms.T, Q, cost_fn, N)
    covariance = lam * weighted_cov(ctx.v, first) + (1 - lam) * weighted_cov(ctx.w, second)
    n_used = _used(N, ctx.n, ctx.m)
    intervals = [
        ci(
            float(estimates[k]),
            VarianceEstimate(
                value=max(float(covariance[k, k]), 0.0),
                lambda_hat=lam,
                scale=scale,
                method="conditional",
                N_used=n_used,
            ),
            level,
        )
        for k in range(len(estimates))
    ]
    return MapResult(
        x=np.atleast_1d(np.asarray(x, dtype=float)).tolist(),
        estimate=estimates.tolist(),
        covariance=covariance.tolist(),
        intervals=intervals,
        lambda_hat=lam,
        scale=scale,
        N_used=n_used,
    )


def check_thresholds(thresholds) -> np.ndarray:
    values = np.asarray(thresholds, dtype=float).ravel()
    if values.size == 0 or not np.all(np.isfinite(values)) or np.any(np.diff(values) < 0):
        raise InvalidThresholdsError(messages.UNSORTED_THRESHOLDS)
    return values


def coloc_curve(
    ctx: OperatorContext,
    cost_values: np.ndarray,
    thresholds,
    level: float | None = None,
    N: NMode | None = None,
) -> ColocResult:
    """
    Colocalization curve t -> pi(c <= t) on a threshold grid with its
    plug-in covariance and a Bonferroni band.

    Args:
        ctx (OperatorContext): operators of the empirical plan
        cost_values (np.ndarray): cost table on the same support
        thresholds: ascending finite thresholds
        level (float, optional): simultaneous level. Defaults to settings.DEFAULT_LEVEL.
        N (int | str, optional): Neumann truncation

    Returns:
        ColocResult

    Raises:
        InvalidThresholdsError: thresholds not finite or not ascending
    """
    level = settings.DEFAULT_LEVEL if level is None else level
    grid = check_thresholds(thresholds)
    if not 0.0 < level < 1.0:
        raise InvalidLevelError(messages.INVALID_LEVEL)
    cost_values = np.asarray(cost_values, dtype=float)
    lam, scale = sample_scaling(ctx.n, ctx.m)

    values, first, second = [], [], []
    for t in grid:
        eta = (cost_values <= t).astype(float)
        values.append(float(ctx.v @ (ctx.xi * eta) @ ctx.w))
        solved_a, solved_b = plan_residuals(ctx, eta, N)
        first.append(solved_a)
        second.append(solved_b)
    covariance = lam * weighted_cov(ctx.v, np.array(first)) + (1 - lam) * weighted_cov(ctx.w, np.array(second))
    z = float(ss.norm.ppf(1.0 - (1.0 - level) / (2 * len(grid))))
    band = [z * math.sqrt(max(covariance[i, i], 0.0)) / scale for i in range(len(grid))]
    return ColocResult(
        thresholds=grid.tolist(),
        values=values,
        covariance=covariance.tolist(),
        band=band,
        level=level,
        lambda_hat=lam,
        scale=scale,
        N_used=_used(N, ctx.n, ctx.m),
    )


def resolve_kernel_map(F: str | Callable[[float], float]) -> Callable[[float], float]:
    if callable(F):
        return F
    try:
        return KERNEL_MAPS[F]
    except KeyError:
        raise UnknownKernelMapError(messages.UNKNOWN_KERNEL_MAP.format(name=F))


def kernel_variance(
    P: DiscreteMeasure,
    Q: DiscreteMeasure,
    U: DiscreteMeasure,
    cost_fn: str | CostFunction,
    epsilon: float,
    tol: float | None = None,
) -> float:
    """
    Var_U[g_{P,U} - g_{Q,U}] with both potentials solved against U's atoms, in cost units.
    """
    cost = parse_cost(cost_fn)
    g_p = EntropicProblem(P, U, cost, epsilon, tol).potentials.g_cost
    g_q = EntropicProblem(Q, U, cost, epsilon, tol).potentials.g_cost
    return weighted_var(U.weights, g_p - g_q)


def kernel_point(
    P: DiscreteMeasure,
    Q: DiscreteMeasure,
    U: DiscreteMeasure,
    cost_fn: str | CostFunction,
    epsilon: float,
    F: str | Callable[[float], float] = "gaussian",
    tol: float | None = None,
) -> float:
    """
    Sinkhorn kernel point estimate K = F(Var_U[g_{P,U} - g_{Q,U}]).
    """
    return float(resolve_kernel_map(F)(kernel_variance(P, Q, U, cost_fn, epsilon, tol)))
