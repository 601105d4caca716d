import logging
import math
from typing import NamedTuple

import numpy as np
from scipy.linalg import lu_solve

from src.conf import messages
from src.conf.config import settings
from src.domain.errors import InvalidMeasureError, NotCenteredError, SingularSystemError
from src.domain.models import OperatorContext, PlanDensity

logger = logging.getLogger(__name__)

NMode = int | str


class SpectralEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def operator_context(plan: PlanDensity, sup_bound: float) -> OperatorContext:
    return OperatorContext(xi=plan.xi, v=plan.v, w=plan.w, sup_bound=sup_bound)


def apply_AP(ctx: OperatorContext, h: np.ndarray) -> np.ndarray:
    """
    (A_P h)_j = sum_i v_i xi_ij h_i, a function on the second support.
    """
    return (ctx.v * np.asarray(h, dtype=float)) @ ctx.xi


def apply_AQ(ctx: OperatorContext, h: np.ndarray) -> np.ndarray:
    """
    (A_Q h)_i = sum_j w_j xi_ij h_j, a function on the first support.
    """
    return ctx.xi @ (ctx.w * np.asarray(h, dtype=float))


def center(weights: np.ndarray, h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    return h - weights @ h


def default_truncation(n: int, m: int) -> int:
    """
    N = ceil(sqrt(log_+(nm / (n + m)))).
    """
    return int(math.ceil(math.sqrt(max(math.log(n * m / (n + m)), 0.0))))


def parse_n_mode(text: str) -> NMode:
    """
    Wire form of N: digit strings become integers, anything else stays text for :func:`resolve_n_mode`.
    """
    text = text.strip()
    return int(text) if text.isdigit() else text


def resolve_n_mode(N: NMode | None, n: int, m: int) -> NMode:
    """
    Map a user-facing N (integer, ``auto`` or ``direct``) to an integer or ``direct``.
    """
    N = settings.DEFAULT_N_MODE if N is None else N
    if isinstance(N, str):
        if N == "direct":
            return "direct"
        if N == "auto":
            return default_truncation(n, m)
        if N.isdigit():
            return int(N)
        raise InvalidMeasureError(messages.INVALID_N_MODE)
    if isinstance(N, (int, np.integer)) and N >= 0:
        return int(N)
    raise InvalidMeasureError(messages.INVALID_N_MODE)


def _apply_composite(ctx: OperatorContext, h: np.ndarray, side: str) -> np.ndarray:
    if side == "P":
        return apply_AQ(ctx, apply_AP(ctx, h))
    return apply_AP(ctx, apply_AQ(ctx, h))


def _check_side(side: str) -> str:
    if side not in ("P", "Q"):
        raise InvalidMeasureError(messages.INVALID_SIDE)
    return side


def neumann_solve(
    ctx: OperatorContext,
    rhs: np.ndarray,
    side: str = "P",
    N: NMode | None = None,
    centering_tol: float | None = None,
) -> np.ndarray:
    """
    Apply (I - T)^{-1} to a centered vector, T = A_Q A_P (side P) or A_P A_Q (side Q).

    Args:
        ctx (OperatorContext): operators of the plan
        rhs (np.ndarray): vector centered under the side's weights
        side (str): ``P`` or ``Q``
        N (int | str, optional): truncation order, ``auto`` for the default
            schedule or ``direct`` for a dense solve. Defaults to settings.DEFAULT_N_MODE.
        centering_tol (float, optional): allowed weighted mean, relative to
            max(1, ||rhs||_inf). Defaults to settings.CENTERING_TOL.

    Returns:
        np.ndarray: sum_{k=0}^N T^k rhs, or the exact inverse for ``direct``

    Raises:
        NotCenteredError: rhs has nonzero weighted mean
        SingularSystemError: dense factorization failed
    """
    side = _check_side(side)
    centering_tol = settings.CENTERING_TOL if centering_tol is None else centering_tol
    rhs = np.asarray(rhs, dtype=float)
    weights = ctx.weights(side)
    scale = max(1.0, float(np.max(np.abs(rhs))) if rhs.size else 1.0)
    if abs(weights @ rhs) > centering_tol * scale:
        raise NotCenteredError(f"{messages.RHS_NOT_CENTERED} (mean {weights @ rhs:.3e})")

    mode = resolve_n_mode(N, ctx.n, ctx.m)
    if mode == "direct":
        lu, piv = ctx.factor(side)
        solution = lu_solve((lu, piv), rhs)
        if not np.all(np.isfinite(solution)):
            raise SingularSystemError(messages.SINGULAR_SYSTEM)
        return solution

    total = rhs.copy()
    term = rhs
    for _ in range(mode):
        term = _apply_composite(ctx, term, side)
        total += term
    return total


def spectral_gap(
    ctx: OperatorContext,
    side: str = "P",
    max_iter: int | None = None,
    tol: float | None = None,
    seed: int = 0,
) -> SpectralEstimate:
    """
    Power iteration for the top eigenvalue of the composite operator on
    centered vectors; the constant direction is deflated by centering every
    iterate. The composite operator is self-adjoint in L^2 of the side's
    weights, so the Rayleigh quotient is used as the estimate.

    Returns:
        SpectralEstimate: value, convergence flag, iterations used
    """
    side = _check_side(side)
    max_iter = settings.POWER_ITER_MAX if max_iter is None else max_iter
    tol = settings.POWER_ITER_TOL if tol is None else tol
    weights = ctx.weights(side)
    size = weights.shape[0]

    def norm(x: np.ndarray) -> float:
        return float(np.sqrt(weights @ (x * x)))

    x = center(weights, np.random.default_rng(seed).standard_normal(size))
    if norm(x) == 0.0:
        return SpectralEstimate(0.0, True, 0)
    x /= norm(x)
    estimate = 0.0
    for iteration in range(1, max_iter + 1):
        y = center(weights, _apply_composite(ctx, x, side))
        rayleigh = float(weights @ (x * y))
        size_y = norm(y)
        if size_y <= tol:
            return SpectralEstimate(max(rayleigh, 0.0), True, iteration)
        if abs(rayleigh - estimate) <= tol:
            return SpectralEstimate(rayleigh, True, iteration)
        estimate = rayleigh
        x = y / size_y
    logger.warning("Power iteration stopped after %d iterations without converging", max_iter)
    return SpectralEstimate(estimate, False, max_iter)
