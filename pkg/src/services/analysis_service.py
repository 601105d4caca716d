import logging

import numpy as np

from src.conf import messages
from src.domain.errors import MissingOptionError, UnknownTargetError
from src.domain.models import DiscreteMeasure, PlanDensity
from src.schemas import (
    CIResponse,
    ColocResult,
    KernelResult,
    PointsRequest,
    SolveReportModel,
    SolveResponse,
)
from src.services.eta_service import parse_eta
from src.services.inference_service import (
    ci,
    coloc_curve,
    divergence_variance,
    kernel_variance,
    map_ci,
    resolve_kernel_map,
    var_cond,
    var_cost,
    var_plan,
)
from src.services.measures_service import CostFunction, from_samples, parse_cost
from src.services.operators_service import NMode
from src.services.sinkhorn_service import EntropicProblem, divergence_parts, log_density

logger = logging.getLogger(__name__)


class AnalysisService:
    """
    Runs solves and inference on one pair of empirical measures

    Shared by the command line and the HTTP routers so both surfaces return
    the same payloads.
    """

    def __init__(
        self,
        P: DiscreteMeasure,
        Q: DiscreteMeasure,
        cost_fn: str | CostFunction,
        epsilon: float,
        tol: float | None = None,
    ):
        self.cost = parse_cost(cost_fn)
        self.problem = EntropicProblem(P, Q, self.cost, epsilon, tol)

    @classmethod
    def from_request(cls, body: PointsRequest) -> "AnalysisService":
        return cls(from_samples(body.x), from_samples(body.y), body.cost, body.eps, body.tol)

    @property
    def converged(self) -> bool:
        return self.problem.report.converged

    def _plan(self) -> PlanDensity:
        if self.converged:
            return self.problem.plan
        problem = self.problem
        xi = np.exp(log_density(problem.potentials, problem.ctx))
        return PlanDensity(xi=xi, v=problem.P.weights, w=problem.Q.weights)

    def solve(self, with_plan: bool = False) -> SolveResponse:
        """
        Potentials, entropic cost, Sinkhorn cost and solver diagnostics.

        Args:
            with_plan (bool): include the coupling pi_ij = v_i w_j xi_ij
        """
        problem = self.problem
        plan = self._plan()
        logger.info(
            "Solved %dx%d problem in %d iterations (converged=%s)",
            len(problem.P),
            len(problem.Q),
            problem.report.iterations,
            problem.report.converged,
        )
        return SolveResponse(
            f=problem.potentials.f.tolist(),
            g=problem.potentials.g.tolist(),
            cost=problem.entropic_cost(),
            sinkhorn_cost=float(plan.v @ (plan.xi * problem.ctx.cost_values) @ plan.w),
            report=SolveReportModel.model_validate(problem.report),
            plan=plan.coupling().tolist() if with_plan else None,
        )

    def confidence(
        self,
        target: str,
        eta: str | None = None,
        x0: list[float] | None = None,
        level: float | None = None,
        N: NMode | None = None,
    ) -> CIResponse:
        """
        Estimate, plug-in variance and interval for one target.

        Raises:
            MissingOptionError: eta missing for plan/cond, or x0 missing for cond/map
        """
        if target in ("plan", "cond") and eta is None:
            raise MissingOptionError(messages.MISSING_TARGET_OPTION.format(target=target, option="eta"))
        if target in ("cond", "map") and x0 is None:
            raise MissingOptionError(messages.MISSING_TARGET_OPTION.format(target=target, option="x0"))

        problem = self.problem
        if target == "divergence":
            parts = divergence_parts(problem.P, problem.Q, self.cost, problem.epsilon, problem.tol)
            estimate = parts.value()
            if not parts.converged:
                return CIResponse(target=target, estimate=estimate, converged=False)
            var = divergence_variance(parts)
            return CIResponse(target=target, estimate=estimate, variance=var, ci=ci(estimate, var, level))

        if not self.converged:
            return CIResponse(target=target, estimate=problem.entropic_cost(), converged=False)

        P, Q, ctx, ops = problem.P, problem.Q, problem.ctx, problem.operators
        if target == "cost":
            estimate = problem.entropic_cost()
            var = var_cost(problem.potentials, P, Q)
        elif target in ("sinkhorn", "plan"):
            table = ctx.cost_values
            if target == "plan":
                table = parse_eta(eta).table(P.atoms, Q.atoms, ctx.cost_values)
            estimate = problem.plan_expectation(table)
            var = var_plan(ops, table, N)
        elif target == "cond":
            x = np.asarray(x0, dtype=float)
            row = parse_eta(eta).bind(ctx.shape).row(x, Q.atoms, self.cost.row(x, Q.atoms))
            estimate = problem.cond_expectation(x, row)
            var = var_cond(ops, problem.potentials, x, row, Q, self.cost, N)
        elif target == "map":
            result = map_ci(ops, problem.potentials, np.asarray(x0, dtype=float), Q, self.cost, level, N)
            return CIResponse(target=target, estimate=result.estimate, map=result)
        else:
            raise UnknownTargetError(messages.UNKNOWN_TARGET.format(name=target))
        return CIResponse(target=target, estimate=estimate, variance=var, ci=ci(estimate, var, level))

    def coloc(self, thresholds: list[float], level: float | None = None, N: NMode | None = None) -> ColocResult:
        problem = self.problem
        return coloc_curve(problem.operators, problem.ctx.cost_values, thresholds, level, N)

    def kernel(self, U: DiscreteMeasure, kernel_map: str = "gaussian") -> KernelResult:
        """
        Sinkhorn kernel between the two measures, with potentials solved against U.
        """
        problem = self.problem
        F = resolve_kernel_map(kernel_map)
        variance = kernel_variance(problem.P, problem.Q, U, self.cost, problem.epsilon, problem.tol)
        return KernelResult(value=float(F(variance)), variance=variance, kernel_map=kernel_map)
