import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from src.conf import messages
from src.conf.config import settings
from src.domain.errors import (
    CoordinateDataError,
    InvalidMeasureError,
    NonOptimalPotentialsError,
    NumericFailureError,
    ShapeMismatchError,
)
from src.domain.models import (
    CostContext,
    DiscreteMeasure,
    OperatorContext,
    PlanDensity,
    PotentialPair,
    SolveReport,
)
from src.services.measures_service import CostFunction, build_cost, parse_cost

logger = logging.getLogger(__name__)

EtaRow = Callable[[np.ndarray], np.ndarray] | np.ndarray


def _soft_min_rows(log_kernel: np.ndarray, g: np.ndarray, w: np.ndarray) -> np.ndarray:
    # -log sum_j w_j exp(log_kernel_ij + g_j), max-subtracted by logsumexp
    return -logsumexp(log_kernel + g[None, :], b=w[None, :], axis=1)


def _soft_min_cols(log_kernel: np.ndarray, f: np.ndarray, v: np.ndarray) -> np.ndarray:
    return -logsumexp(log_kernel + f[:, None], b=v[:, None], axis=0)


def fixed_point_residual(pot: PotentialPair, P: DiscreteMeasure, Q: DiscreteMeasure, ctx: CostContext) -> float:
    log_kernel = -ctx.scaled_cost
    res_f = np.max(np.abs(pot.f - _soft_min_rows(log_kernel, pot.g, Q.weights)))
    res_g = np.max(np.abs(pot.g - _soft_min_cols(log_kernel, pot.f, P.weights)))
    return float(max(res_f, res_g))


def solve(
    P: DiscreteMeasure,
    Q: DiscreteMeasure,
    ctx: CostContext,
    tol: float | None = None,
    max_iter: int | None = None,
) -> tuple[PotentialPair, SolveReport]:
    """
    Log-domain Sinkhorn iterations for the entropic dual.

    Alternates f <- -log sum_j w_j C(., y_j) e^{g_j} and
    g <- -log sum_i v_i C(x_i, .) e^{f_i} until the sup-norm fixed-point
    residual is at most ``tol``, then moves the constant of g into f so that
    int g dQ = 0.

    Args:
        P (DiscreteMeasure): first marginal
        Q (DiscreteMeasure): second marginal
        ctx (CostContext): cost on the product support
        tol (float, optional): residual tolerance. Defaults to settings.SINKHORN_TOL.
        max_iter (int, optional): iteration cap. Defaults to settings.SINKHORN_MAX_ITER.

    Returns:
        tuple[PotentialPair, SolveReport]: the report has converged=False when
        the cap is reached; the caller decides what to do with such a solve.

    Raises:
        ShapeMismatchError: supports do not match the cost table
        NumericFailureError: a NaN appeared in the iterates
    """
    tol = settings.SINKHORN_TOL if tol is None else tol
    max_iter = settings.SINKHORN_MAX_ITER if max_iter is None else max_iter
    if not tol > 0:
        raise InvalidMeasureError(messages.NON_POSITIVE_TOLERANCE)
    if ctx.shape != (len(P), len(Q)):
        raise ShapeMismatchError(messages.SUPPORT_MISMATCH)

    v, w = P.weights, Q.weights
    log_kernel = -ctx.scaled_cost
    f = _soft_min_rows(log_kernel, np.zeros(len(Q)), w)
    g = np.zeros(len(Q))
    residual = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        g = _soft_min_cols(log_kernel, f, v)
        f_next = _soft_min_rows(log_kernel, g, w)
        residual = float(np.max(np.abs(f_next - f)))
        if not np.isfinite(residual):
            raise NumericFailureError(messages.NUMERIC_FAILURE)
        if residual <= tol:
            break
        f = f_next

    shift = float(w @ g)
    pot = PotentialPair(f=f + shift, g=g - shift, epsilon=ctx.epsilon, g_mean=float(w @ (g - shift)))
    converged = residual <= tol
    if not converged:
        logger.warning(
            "Sinkhorn did not converge after %d iterations (residual %.3e)", iterations, residual
        )
    else:
        logger.debug("Sinkhorn converged in %d iterations (residual %.3e)", iterations, residual)
    report = SolveReport(
        iterations=iterations,
        final_residual=residual,
        converged=converged,
        duality_gap=duality_gap(pot, P, Q, ctx),
    )
    return pot, report


def log_density(pot: PotentialPair, ctx: CostContext) -> np.ndarray:
    return -ctx.scaled_cost + pot.f[:, None] + pot.g[None, :]


def plan_density(
    pot: PotentialPair,
    ctx: CostContext,
    P: DiscreteMeasure,
    Q: DiscreteMeasure,
    tol: float | None = None,
) -> PlanDensity:
    """
    Plan density xi_ij = C_ij e^{f_i + g_j}.

    Raises:
        NonOptimalPotentialsError: a marginal is off by more than 100 * tol
    """
    tol = settings.SINKHORN_TOL if tol is None else tol
    plan = PlanDensity(xi=np.exp(log_density(pot, ctx)), v=P.weights, w=Q.weights)
    error = plan.marginal_error()
    if error > 100 * tol:
        raise NonOptimalPotentialsError(f"{messages.NON_OPTIMAL_POTENTIALS} (marginal error {error:.3e})")
    return plan


def dual_value(pot: PotentialPair, P: DiscreteMeasure, Q: DiscreteMeasure, ctx: CostContext) -> float:
    mass = float(P.weights @ np.exp(log_density(pot, ctx)) @ Q.weights)
    return ctx.epsilon * (P.mean(pot.f) + Q.mean(pot.g) + 1.0 - mass)


def primal_value(pot: PotentialPair, P: DiscreteMeasure, Q: DiscreteMeasure, ctx: CostContext) -> float:
    """
    int c dpi + epsilon KL(pi | P x Q) for the plan induced by the potentials
    """
    log_xi = log_density(pot, ctx)
    weighted = P.weights[:, None] * np.exp(log_xi) * Q.weights[None, :]
    return float(np.sum(weighted * ctx.cost_values) + ctx.epsilon * np.sum(weighted * log_xi))


def duality_gap(pot: PotentialPair, P: DiscreteMeasure, Q: DiscreteMeasure, ctx: CostContext) -> float:
    return abs(primal_value(pot, P, Q, ctx) - dual_value(pot, P, Q, ctx))


def entropic_cost(pot: PotentialPair, P: DiscreteMeasure, Q: DiscreteMeasure, ctx: CostContext) -> float:
    """
    Regularized cost S_eps = eps * (int f dP + int g dQ + 1 - int C e^{f+g} dP dQ).
    """
    return dual_value(pot, P, Q, ctx)


def sinkhorn_cost(plan: PlanDensity, ctx: CostContext) -> float:
    return plan_expectation(plan, ctx.cost_values)


def plan_expectation(plan: PlanDensity, eta: np.ndarray) -> float:
    """
    Expectation of a bounded evaluation table under the plan.

    Raises:
        NumericFailureError: eta has non-finite entries
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != plan.xi.shape:
        raise ShapeMismatchError(
            messages.ETA_SHAPE_MISMATCH.format(actual=eta.shape, expected=plan.xi.shape)
        )
    if not np.all(np.isfinite(eta)):
        raise NumericFailureError(messages.NON_FINITE_ETA)
    return float(plan.v @ (plan.xi * eta) @ plan.w)


def extend_f_from_costs(pot: PotentialPair, cost_rows: np.ndarray, w: np.ndarray) -> np.ndarray:
    """
    Canonical extension f(x) = -log sum_j w_j exp(g_j - c(x, y_j)/eps) for a
    block of query points given their cost rows against the second support.
    """
    cost_rows = np.atleast_2d(cost_rows)
    return _soft_min_rows(-cost_rows / pot.epsilon, pot.g, w)


def extend_g_from_costs(pot: PotentialPair, cost_cols: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    Canonical extension of g for query points given as columns c(x_i, y).
    """
    cost_cols = np.asarray(cost_cols, dtype=float)
    if cost_cols.ndim == 1:
        cost_cols = cost_cols[:, None]
    return _soft_min_cols(-cost_cols / pot.epsilon, pot.f, v)


def extend_f(pot: PotentialPair, x, Q: DiscreteMeasure, cost_fn: str | CostFunction) -> float:
    cost = parse_cost(cost_fn)
    return float(extend_f_from_costs(pot, cost.row(x, Q.atoms), Q.weights)[0])


def conditional_density(pot: PotentialPair, x, Q: DiscreteMeasure, cost_fn: str | CostFunction) -> np.ndarray:
    """
    xi(x, y_j) for every atom of Q, built from the extended f(x) and stored g.
    """
    cost_row = parse_cost(cost_fn).row(x, Q.atoms)
    f_x = extend_f_from_costs(pot, cost_row, Q.weights)[0]
    return np.exp(f_x + pot.g - cost_row / pot.epsilon)


def eta_values(eta_row: EtaRow, Q: DiscreteMeasure) -> np.ndarray:
    values = eta_row(Q.atoms) if callable(eta_row) else eta_row
    values = np.asarray(values, dtype=float)
    if values.shape[0] != len(Q):
        raise ShapeMismatchError(
            messages.ETA_SHAPE_MISMATCH.format(actual=values.shape, expected=(len(Q),))
        )
    if not np.all(np.isfinite(values)):
        raise NumericFailureError(messages.NON_FINITE_ETA)
    return values


def cond_expectation(
    pot: PotentialPair, x, eta_row: EtaRow, Q: DiscreteMeasure, cost_fn: str | CostFunction
) -> float:
    """
    E_pi[eta(X, Y) | X = x] = sum_j w_j xi(x, y_j) eta(x, y_j).

    Args:
        eta_row: values eta(x, y_j) over Q's atoms, or a callable taking Q's atoms
    """
    values = eta_values(eta_row, Q)
    return float(Q.weights @ (conditional_density(pot, x, Q, cost_fn) * values))


def entropic_map(pot: PotentialPair, x, Q: DiscreteMeasure, cost_fn: str | CostFunction) -> np.ndarray:
    """
    Barycentric projection M(x) = E_pi[Y | X = x].

    Raises:
        CoordinateDataError: Q's atoms are not coordinate vectors
    """
    if not Q.is_coordinate:
        raise CoordinateDataError(messages.MAP_REQUIRES_COORDINATES)
    weights = Q.weights * conditional_density(pot, x, Q, cost_fn)
    return weights @ Q.atoms


class EntropicProblem:
    """
    Entropic transport problem between two discrete measures

    Solves lazily and caches the potentials, plan and operators so that every
    downstream functional reuses one solve.
    """

    def __init__(
        self,
        P: DiscreteMeasure,
        Q: DiscreteMeasure,
        cost_fn: str | CostFunction,
        epsilon: float,
        tol: float | None = None,
        max_iter: int | None = None,
        table: np.ndarray | None = None,
    ):
        """
        Initialize an EntropicProblem

        Args:
            P (DiscreteMeasure): first marginal
            Q (DiscreteMeasure): second marginal
            cost_fn (str | CostFunction): named cost
            epsilon (float): regularization
            tol (float, optional): solver tolerance
            max_iter (int, optional): solver iteration cap
            table (np.ndarray, optional): explicit cost values for ``table`` costs
        """
        self.P = P
        self.Q = Q
        self.cost = parse_cost(cost_fn, table)
        self.epsilon = float(epsilon)
        self.tol = settings.SINKHORN_TOL if tol is None else tol
        self.max_iter = settings.SINKHORN_MAX_ITER if max_iter is None else max_iter

    @cached_property
    def ctx(self) -> CostContext:
        return build_cost(self.cost, self.P, self.Q, self.epsilon)

    @cached_property
    def solution(self) -> tuple[PotentialPair, SolveReport]:
        return solve(self.P, self.Q, self.ctx, tol=self.tol, max_iter=self.max_iter)

    @property
    def potentials(self) -> PotentialPair:
        return self.solution[0]

    @property
    def report(self) -> SolveReport:
        return self.solution[1]

    @cached_property
    def plan(self) -> PlanDensity:
        return plan_density(self.potentials, self.ctx, self.P, self.Q, tol=self.tol)

    @cached_property
    def operators(self) -> OperatorContext:
        return OperatorContext(
            xi=self.plan.xi, v=self.P.weights, w=self.Q.weights, sup_bound=self.ctx.scaled_bound
        )

    def entropic_cost(self) -> float:
        return entropic_cost(self.potentials, self.P, self.Q, self.ctx)

    def sinkhorn_cost(self) -> float:
        return sinkhorn_cost(self.plan, self.ctx)

    def plan_expectation(self, eta: np.ndarray) -> float:
        return plan_expectation(self.plan, eta)

    def cond_expectation(self, x, eta_row: EtaRow) -> float:
        return cond_expectation(self.potentials, x, eta_row, self.Q, self.cost)

    def entropic_map(self, x) -> np.ndarray:
        return entropic_map(self.potentials, x, self.Q, self.cost)


@dataclass(frozen=True)
class DivergenceParts:
    """
    The three solves behind a Sinkhorn divergence

    Attributes:
        pq (EntropicProblem): problem between P and Q
        pp (EntropicProblem): problem between P and itself
        qq (EntropicProblem): problem between Q and itself
    """

    pq: EntropicProblem
    pp: EntropicProblem
    qq: EntropicProblem

    @property
    def converged(self) -> bool:
        return all(p.report.converged for p in (self.pq, self.pp, self.qq))

    def value(self) -> float:
        return self.pq.entropic_cost() - 0.5 * (self.pp.entropic_cost() + self.qq.entropic_cost())


def divergence_parts(
    P: DiscreteMeasure,
    Q: DiscreteMeasure,
    cost_fn: str | CostFunction,
    epsilon: float,
    tol: float | None = None,
    max_iter: int | None = None,
) -> DivergenceParts:
    cost = parse_cost(cost_fn)
    return DivergenceParts(
        pq=EntropicProblem(P, Q, cost, epsilon, tol, max_iter),
        pp=EntropicProblem(P, P, cost, epsilon, tol, max_iter),
        qq=EntropicProblem(Q, Q, cost, epsilon, tol, max_iter),
    )


def sinkhorn_divergence(
    P: DiscreteMeasure,
    Q: DiscreteMeasure,
    cost_fn: str | CostFunction,
    epsilon: float,
    tol: float | None = None,
) -> float:
    """
    Debiased D = S(P, Q) - (S(P, P) + S(Q, Q)) / 2 from three independent solves.
    """
    return divergence_parts(P, Q, cost_fn, epsilon, tol).value()
