"""
Exact population quantities on small finite spaces.

Every routine here works with the true weights of a :class:`FinitePopulation`
and solves the operator equations with dense inverses built independently of
:mod:`src.services.operators_service`, so the results can serve as ground
truth for the plug-in estimators.
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from src.conf import messages
from src.conf.config import settings
from src.domain.errors import CoordinateDataError, NotCenteredError
from src.domain.models import FinitePopulation, PlanDensity, PotentialPair, SolveReport
from src.services.eta_service import EtaSpec, parse_eta
from src.services.inference_service import check_thresholds
from src.services.measures_service import CostFunction, build_cost, parse_cost
from src.services.sinkhorn_service import (
    entropic_cost,
    extend_f_from_costs,
    plan_density,
    plan_expectation,
    solve,
)

logger = logging.getLogger(__name__)


def _var(weights: np.ndarray, values: np.ndarray) -> float:
    mean = weights @ values
    return max(float(weights @ ((values - mean) ** 2)), 0.0)


def _cov(weights: np.ndarray, rows: np.ndarray) -> np.ndarray:
    means = rows @ weights
    cov = np.einsum("i,ki,li->kl", weights, rows - means[:, None], rows - means[:, None])
    return 0.5 * (cov + cov.T)


def centered_inverse(composite: np.ndarray, weights: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """
    Solve (I - T) x = rhs on the subspace of weight-centered vectors.

    The composite is sandwiched between centering projections so that the
    system is the identity on constants.

    Raises:
        NotCenteredError: rhs has nonzero weighted mean
    """
    rhs = np.asarray(rhs, dtype=float)
    if abs(weights @ rhs) > settings.CENTERING_TOL * max(1.0, float(np.max(np.abs(rhs)))):
        raise NotCenteredError(messages.RHS_NOT_CENTERED)
    size = weights.shape[0]
    projector = np.eye(size) - np.outer(np.ones(size), weights)
    system = np.eye(size) - projector @ composite @ projector
    return scipy.linalg.solve(system, projector @ rhs)


@dataclass(frozen=True)
class BregmanResult:
    """
    Primal plan from iterative Bregman projections

    Attributes:
        plan (PlanDensity): density of the coupling w.r.t. P x Q
        iterations (int): projection sweeps performed
        marginal_error (float): sup marginal violation at exit
        converged (bool): marginal_error <= tolerance
    """

    plan: PlanDensity
    iterations: int
    marginal_error: float
    converged: bool


def brute_force_plan(
    pop: FinitePopulation, max_iter: int = 100000, tol: float | None = None
) -> BregmanResult:
    """
    Minimize int c dpi + eps KL(pi | P x Q) over couplings by alternating
    KL projections onto the two marginal constraints, starting from the
    Gibbs measure. Runs in the primal; no dual potentials are involved.

    Args:
        pop (FinitePopulation): population with small supports
        max_iter (int): projection budget
        tol (float, optional): marginal tolerance. Defaults to settings.BREGMAN_TOL.

    Returns:
        BregmanResult, flagged converged=False when the budget runs out
    """
    tol = settings.BREGMAN_TOL if tol is None else tol
    v, w = pop.P.weights, pop.Q.weights
    coupling = v[:, None] * pop.ctx.gibbs_values * w[None, :]
    coupling /= coupling.sum()
    error = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        coupling *= (v / coupling.sum(axis=1))[:, None]
        coupling *= (w / coupling.sum(axis=0))[None, :]
        error = float(np.max(np.abs(coupling.sum(axis=1) - v)))
        if error <= tol:
            break
    converged = error <= tol
    if not converged:
        logger.warning("Bregman projections stopped at marginal error %.3e", error)
    xi = coupling / (v[:, None] * w[None, :])
    return BregmanResult(
        plan=PlanDensity(xi=xi, v=v, w=w), iterations=iterations, marginal_error=error, converged=converged
    )


class PopulationOracle:
    """
    Ground-truth values and asymptotic variances for one finite population

    Solves once with the oracle tolerance and caches the potentials, the plan
    and the dense composite operators.
    """

    def __init__(self, pop: FinitePopulation):
        self.pop = pop
        self.P = pop.P
        self.Q = pop.Q
        self.ctx = pop.ctx
        self.lam = pop.lam

    @cached_property
    def cost(self) -> CostFunction:
        return parse_cost(self.pop.cost_name, self.ctx.cost_values)

    @cached_property
    def solution(self) -> tuple[PotentialPair, SolveReport]:
        pot, report = solve(
            self.P, self.Q, self.ctx, tol=settings.ORACLE_TOL, max_iter=settings.ORACLE_MAX_ITER
        )
        if not report.converged:
            logger.warning("Oracle solve for %s did not reach %.1e", self.pop.name, settings.ORACLE_TOL)
        return pot, report

    @property
    def potentials(self) -> PotentialPair:
        return self.solution[0]

    @cached_property
    def plan(self) -> PlanDensity:
        return plan_density(self.potentials, self.ctx, self.P, self.Q, tol=settings.ORACLE_TOL)

    @cached_property
    def composites(self) -> tuple[np.ndarray, np.ndarray]:
        xi, v, w = self.plan.xi, self.P.weights, self.Q.weights
        # T_P[i, k] = sum_j w_j xi_ij v_k xi_kj, T_Q[j, l] = sum_i v_i xi_ij w_l xi_il
        t_p = (xi * w[None, :]) @ (xi * v[:, None]).T
        t_q = (xi * v[:, None]).T @ (xi * w[None, :])
        return t_p, t_q

    def _solve_p(self, rhs: np.ndarray) -> np.ndarray:
        return centered_inverse(self.composites[0], self.P.weights, rhs)

    def _solve_q(self, rhs: np.ndarray) -> np.ndarray:
        return centered_inverse(self.composites[1], self.Q.weights, rhs)

    def _combine(self, first: np.ndarray, second: np.ndarray) -> np.ndarray:
        return self.lam * _cov(self.P.weights, first) + (1 - self.lam) * _cov(self.Q.weights, second)

    def eta_table(self, eta: str | EtaSpec | np.ndarray) -> np.ndarray:
        spec = parse_eta(eta)
        return spec.table(self.P.atoms, self.Q.atoms, self.ctx.cost_values)

    def cost_row(self, x) -> np.ndarray:
        return self.cost.row(x, self.Q.atoms)

    def conditional_density(self, x) -> np.ndarray:
        cost_row = self.cost_row(x)
        pot = self.potentials
        f_x = extend_f_from_costs(pot, cost_row, self.Q.weights)[0]
        return np.exp(f_x + pot.g - cost_row / pot.epsilon)

    def eta_row(self, x, eta: str | EtaSpec | np.ndarray) -> np.ndarray:
        spec = parse_eta(eta).bind(self.ctx.shape)
        return spec.row(x, self.Q.atoms, self.cost_row(x))

    def exact_cost(self) -> float:
        return entropic_cost(self.potentials, self.P, self.Q, self.ctx)

    def exact_plan_expectation(self, eta) -> float:
        return plan_expectation(self.plan, self.eta_table(eta))

    def exact_sinkhorn_cost(self) -> float:
        return plan_expectation(self.plan, self.ctx.cost_values)

    def exact_cond_expectation(self, x, eta_row: np.ndarray) -> float:
        return float(self.Q.weights @ (self.conditional_density(x) * np.asarray(eta_row, dtype=float)))

    def exact_map(self, x) -> np.ndarray:
        if not self.Q.is_coordinate:
            raise CoordinateDataError(messages.MAP_REQUIRES_COORDINATES)
        return (self.Q.weights * self.conditional_density(x)) @ self.Q.atoms

    def exact_sigma_cost(self) -> float:
        pot = self.potentials
        return self.lam * _var(self.P.weights, pot.f_cost) + (1 - self.lam) * _var(self.Q.weights, pot.g_cost)

    def _plan_directions(self, eta_table: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xi, v, w = self.plan.xi, self.P.weights, self.Q.weights
        weighted = xi * eta_table
        eta_x = weighted @ w
        eta_y = v @ weighted
        a = eta_x - (xi * w[None, :]) @ eta_y
        b = eta_y - (xi * v[:, None]).T @ eta_x
        return self._solve_p(a), self._solve_q(b)

    def exact_sigma_plan(self, eta) -> float:
        first, second = self._plan_directions(self.eta_table(eta))
        return self.lam * _var(self.P.weights, first) + (1 - self.lam) * _var(self.Q.weights, second)

    def _cond_directions(self, x, eta_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        eta_rows = np.atleast_2d(np.asarray(eta_rows, dtype=float))
        density = self.conditional_density(x)
        w = self.Q.weights
        estimates = (eta_rows * density[None, :]) @ w
        h = (eta_rows - estimates[:, None]) * density[None, :]
        lifted = h @ (self.plan.xi * w[None, :]).T
        first = np.array([self._solve_p(row) for row in lifted])
        second = np.array([self._solve_q(row) for row in h])
        return first, second

    def exact_sigma_cond(self, x, eta_row: np.ndarray) -> float:
        first, second = self._cond_directions(x, eta_row)
        return float(self._combine(first, second)[0, 0])

    def exact_map_covariance(self, x) -> np.ndarray:
        if not self.Q.is_coordinate:
            raise CoordinateDataError(messages.MAP_REQUIRES_COORDINATES)
        first, second = self._cond_directions(x, self.Q.atoms.T)
        return self._combine(first, second)

    def exact_coloc(self, thresholds) -> np.ndarray:
        grid = check_thresholds(thresholds)
        return np.array([self.exact_plan_expectation((self.ctx.cost_values <= t).astype(float)) for t in grid])

    def exact_coloc_covariance(self, thresholds) -> np.ndarray:
        grid = check_thresholds(thresholds)
        directions = [self._plan_directions((self.ctx.cost_values <= t).astype(float)) for t in grid]
        first = np.array([d[0] for d in directions])
        second = np.array([d[1] for d in directions])
        return self._combine(first, second)

    @cached_property
    def self_problems(self) -> tuple[tuple[PotentialPair, float], tuple[PotentialPair, float]]:
        """
        Potentials and costs of the population problems (P, P) and (Q, Q).
        """
        out = []
        for measure in (self.P, self.Q):
            ctx = build_cost(self.cost, measure, measure, self.ctx.epsilon)
            pot, _ = solve(measure, measure, ctx, tol=settings.ORACLE_TOL, max_iter=settings.ORACLE_MAX_ITER)
            out.append((pot, entropic_cost(pot, measure, measure, ctx)))
        return out[0], out[1]

    def exact_divergence(self) -> float:
        (_, cost_pp), (_, cost_qq) = self.self_problems
        return self.exact_cost() - 0.5 * (cost_pp + cost_qq)

    def exact_sigma_divergence(self) -> float:
        (pp, _), (qq, _) = self.self_problems
        pq = self.potentials
        side_p = pq.f_cost - 0.5 * (pp.f_cost + pp.g_cost)
        side_q = pq.g_cost - 0.5 * (qq.f_cost + qq.g_cost)
        return self.lam * _var(self.P.weights, side_p) + (1 - self.lam) * _var(self.Q.weights, side_q)


def exact_solve(pop: FinitePopulation) -> PotentialPair:
    return PopulationOracle(pop).potentials


def exact_cost(pop: FinitePopulation) -> float:
    return PopulationOracle(pop).exact_cost()


def exact_plan_expectation(pop: FinitePopulation, eta) -> float:
    return PopulationOracle(pop).exact_plan_expectation(eta)


def exact_cond_expectation(pop: FinitePopulation, x, eta_row: np.ndarray) -> float:
    return PopulationOracle(pop).exact_cond_expectation(x, eta_row)


def exact_map(pop: FinitePopulation, x) -> np.ndarray:
    return PopulationOracle(pop).exact_map(x)


def exact_divergence(pop: FinitePopulation) -> float:
    return PopulationOracle(pop).exact_divergence()


def exact_coloc(pop: FinitePopulation, thresholds) -> np.ndarray:
    return PopulationOracle(pop).exact_coloc(thresholds)


def exact_sigma_cost(pop: FinitePopulation) -> float:
    """
    lambda Var_P[eps f] + (1 - lambda) Var_Q[eps g] under the true weights.
    """
    return PopulationOracle(pop).exact_sigma_cost()


def exact_sigma_plan(pop: FinitePopulation, eta) -> float:
    """
    Asymptotic variance of a plan expectation, with direct inverses on the centered subspaces.
    """
    return PopulationOracle(pop).exact_sigma_plan(eta)


def exact_sigma_cond(pop: FinitePopulation, x, eta_row: np.ndarray) -> float:
    return PopulationOracle(pop).exact_sigma_cond(x, eta_row)


def exact_sigma_divergence(pop: FinitePopulation) -> float:
    return PopulationOracle(pop).exact_sigma_divergence()


def exact_map_covariance(pop: FinitePopulation, x) -> np.ndarray:
    return PopulationOracle(pop).exact_map_covariance(x)


def exact_coloc_covariance(pop: FinitePopulation, thresholds) -> np.ndarray:
    return PopulationOracle(pop).exact_coloc_covariance(thresholds)
