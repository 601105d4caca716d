from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import lu_factor

from src.conf import messages
from src.domain.errors import (
    EmptySampleError,
    InvalidMeasureError,
    ShapeMismatchError,
    SingularSystemError,
    UnboundedCostError,
)

WEIGHT_SUM_TOL = 1e-12
SINGULAR_PIVOT_TOL = 1e-14


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _deflated_factor(composite: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # I - T + 1 w^T agrees with I - T on centered vectors and is invertible
    size = composite.shape[0]
    system = np.eye(size) - composite + np.outer(np.ones(size), weights)
    lu, piv = lu_factor(system, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= SINGULAR_PIVOT_TOL * max(pivots.max(), 1.0):
        raise SingularSystemError(messages.SINGULAR_SYSTEM)
    return lu, piv


@dataclass(frozen=True)
class SampleSet:
    """
    Raw sample points together with their provenance

    Attributes:
        points (np.ndarray): (n, d) array of coordinates
        source (str): file path or generator name with seed
    """

    points: np.ndarray
    source: str

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.size == 0 or points.shape[0] == 0:
            raise EmptySampleError(messages.EMPTY_SAMPLE)
        if points.ndim != 2:
            raise InvalidMeasureError(messages.MIXED_DIMENSIONS)
        object.__setattr__(self, "points", _freeze(points.copy()))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class DiscreteMeasure:
    """
    Finitely supported probability measure

    Coordinate data is stored as an (n, d) float array; metric-space data with
    opaque labels is stored as a 1-d object array.

    Attributes:
        atoms (np.ndarray): support points, duplicates allowed
        weights (np.ndarray): nonnegative weights summing to one
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms)
        if atoms.dtype.kind in "biuf":
            atoms = atoms.astype(float)
            if atoms.ndim == 1:
                atoms = atoms.reshape(-1, 1)
        weights = np.asarray(self.weights, dtype=float).ravel()
        if atoms.shape[0] == 0:
            raise EmptySampleError(messages.EMPTY_SAMPLE)
        if atoms.shape[0] != weights.shape[0]:
            raise InvalidMeasureError(messages.ATOMS_WEIGHTS_MISMATCH)
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidMeasureError(messages.WEIGHTS_NOT_NORMALIZED)
        object.__setattr__(self, "atoms", _freeze(atoms.copy()))
        object.__setattr__(self, "weights", _freeze(weights.copy()))

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def is_coordinate(self) -> bool:
        return self.atoms.dtype.kind == "f" and self.atoms.ndim == 2

    def mean(self, values: np.ndarray) -> float:
        return float(self.weights @ values)


@dataclass(frozen=True)
class CostContext:
    """
    Bounded cost evaluated on a product support, with its Gibbs kernel

    Attributes:
        cost_values (np.ndarray): (n, m) table c(x_i, y_j)
        epsilon (float): regularization strength
        sup_bound (float): max |c|
        gibbs_values (np.ndarray): exp(-c / epsilon)
        cost_name (str): name of the cost that produced the table
    """

    cost_values: np.ndarray
    epsilon: float
    sup_bound: float = field(init=False)
    gibbs_values: np.ndarray = field(init=False)
    cost_name: str = "table"

    def __post_init__(self):
        cost = np.asarray(self.cost_values, dtype=float)
        if cost.ndim != 2:
            raise ShapeMismatchError(
                messages.COST_SHAPE_MISMATCH.format(actual=cost.shape, expected="(n, m)")
            )
        if not np.all(np.isfinite(cost)):
            raise UnboundedCostError(messages.UNBOUNDED_COST)
        if not self.epsilon > 0:
            raise InvalidMeasureError(messages.NON_POSITIVE_EPSILON)
        object.__setattr__(self, "cost_values", _freeze(cost.copy()))
        object.__setattr__(self, "sup_bound", float(np.max(np.abs(cost))))
        object.__setattr__(self, "gibbs_values", _freeze(np.exp(-cost / self.epsilon)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost_values.shape

    @property
    def scaled_cost(self) -> np.ndarray:
        return self.cost_values / self.epsilon

    @property
    def scaled_bound(self) -> float:
        """
        ||c / epsilon||_inf, the constant in every potential and density bound
        """
        return self.sup_bound / self.epsilon


@dataclass(frozen=True)
class PotentialPair:
    """
    Canonically normalized dual potentials, in units of c / epsilon

    Attributes:
        f (np.ndarray): potential over the atoms of the first measure
        g (np.ndarray): potential over the atoms of the second measure
        epsilon (float): regularization the pair was solved with
        g_mean (float): int g dQ after normalization, zero up to rounding
    """

    f: np.ndarray
    g: np.ndarray
    epsilon: float = 1.0
    g_mean: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "f", _freeze(np.asarray(self.f, dtype=float).copy()))
        object.__setattr__(self, "g", _freeze(np.asarray(self.g, dtype=float).copy()))

    @property
    def f_cost(self) -> np.ndarray:
        return self.epsilon * self.f

    @property
    def g_cost(self) -> np.ndarray:
        return self.epsilon * self.g


@dataclass(frozen=True)
class PlanDensity:
    """
    Density of the entropic plan with respect to the product measure

    Attributes:
        xi (np.ndarray): (n, m) positive table
        v (np.ndarray): weights of the first measure
        w (np.ndarray): weights of the second measure
        row_marginal (np.ndarray): sum_j w_j xi_ij, one at optimality
        col_marginal (np.ndarray): sum_i v_i xi_ij, one at optimality
    """

    xi: np.ndarray
    v: np.ndarray
    w: np.ndarray
    row_marginal: np.ndarray = field(init=False)
    col_marginal: np.ndarray = field(init=False)

    def __post_init__(self):
        xi = _freeze(np.asarray(self.xi, dtype=float).copy())
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "row_marginal", _freeze(xi @ self.w))
        object.__setattr__(self, "col_marginal", _freeze(self.v @ xi))

    def coupling(self) -> np.ndarray:
        return self.v[:, None] * self.xi * self.w[None, :]

    def marginal_error(self) -> float:
        return float(
            max(
                np.max(np.abs(self.row_marginal - 1.0)),
                np.max(np.abs(self.col_marginal - 1.0)),
            )
        )


@dataclass(frozen=True)
class SolveReport:
    """
    Diagnostics of a Sinkhorn solve

    Attributes:
        iterations (int): number of full sweeps performed
        final_residual (float): sup-norm of both fixed-point residuals
        converged (bool): final_residual <= tolerance
        duality_gap (float): |primal - dual| at the returned potentials
    """

    iterations: int
    final_residual: float
    converged: bool
    duality_gap: float = float("nan")


@dataclass(frozen=True)
class OperatorContext:
    """
    Conditional-expectation operators of an entropic plan

    ``A_P`` maps functions on the first support to the second, ``A_Q`` the
    other way round. Composite tables are assembled lazily and cached.

    Attributes:
        xi (np.ndarray): plan density table
        v (np.ndarray): weights of the first measure
        w (np.ndarray): weights of the second measure
        sup_bound (float): ||c / epsilon||_inf
        delta (float): contraction bound 1 - exp(-3 sup_bound)
    """

    xi: np.ndarray
    v: np.ndarray
    w: np.ndarray
    sup_bound: float
    delta: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "delta", float(-np.expm1(-3.0 * self.sup_bound)))

    @property
    def n(self) -> int:
        return self.v.shape[0]

    @property
    def m(self) -> int:
        return self.w.shape[0]

    @cached_property
    def ap_table(self) -> np.ndarray:
        # (A_P h)_j = sum_i v_i xi_ij h_i
        return (self.xi * self.v[:, None]).T

    @cached_property
    def aq_table(self) -> np.ndarray:
        # (A_Q h)_i = sum_j w_j xi_ij h_j
        return self.xi * self.w[None, :]

    @cached_property
    def composite_p(self) -> np.ndarray:
        return self.aq_table @ self.ap_table

    @cached_property
    def composite_q(self) -> np.ndarray:
        return self.ap_table @ self.aq_table

    def composite(self, side: str) -> np.ndarray:
        return self.composite_p if side == "P" else self.composite_q

    def weights(self, side: str) -> np.ndarray:
        return self.v if side == "P" else self.w

    @cached_property
    def factor_p(self) -> tuple[np.ndarray, np.ndarray]:
        return _deflated_factor(self.composite_p, self.v)

    @cached_property
    def factor_q(self) -> tuple[np.ndarray, np.ndarray]:
        return _deflated_factor(self.composite_q, self.w)

    def factor(self, side: str) -> tuple[np.ndarray, np.ndarray]:
        return self.factor_p if side == "P" else self.factor_q


@dataclass(frozen=True)
class EtaHat:
    """
    Plan-weighted marginal averages of an evaluation function

    Attributes:
        eta_x (np.ndarray): sum_j w_j xi_ij eta_ij over first-measure atoms
        eta_y (np.ndarray): sum_i v_i xi_ij eta_ij over second-measure atoms
    """

    eta_x: np.ndarray
    eta_y: np.ndarray


@dataclass(frozen=True)
class FinitePopulation:
    """
    True finite population behind a sampling experiment

    Attributes:
        P (DiscreteMeasure): first population measure
        Q (DiscreteMeasure): second population measure
        ctx (CostContext): cost on the full product support
        lam (float): limit of m / (n + m)
        cost_name (str): named cost, needed to evaluate the cost on samples
        name (str): fixture name
    """

    P: DiscreteMeasure
    Q: DiscreteMeasure
    ctx: CostContext
    lam: float = 0.5
    cost_name: str = "sq_euclidean"
    name: str = "population"

    def __post_init__(self):
        if (
            np.any(self.P.weights <= 0)
            or np.any(self.Q.weights <= 0)
            or not 0.0 < self.lam < 1.0
        ):
            raise InvalidMeasureError(messages.INVALID_POPULATION)
        if self.ctx.shape != (len(self.P), len(self.Q)):
            raise ShapeMismatchError(messages.SUPPORT_MISMATCH)
