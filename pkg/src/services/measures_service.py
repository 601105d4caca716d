import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from src.conf import messages
from src.domain.errors import (
    EmptySampleError,
    ShapeMismatchError,
    UnknownCostError,
    UnknownGeneratorError,
)
from src.domain.models import CostContext, DiscreteMeasure, SampleSet
from src.repository.samples_repository import SampleRepository

logger = logging.getLogger(__name__)

PARAMETRIC_COSTS = ("lp", "constant", "indicator")
SIMPLE_COSTS = ("sq_euclidean", "euclidean", "floor", "discrete", "zero")


@dataclass(frozen=True)
class CostFunction:
    """
    Named bounded cost that can be evaluated on arbitrary atom arrays

    Supported names: ``sq_euclidean``, ``euclidean``, ``lp:p`` (||x - y||_p^p),
    ``constant:k``, ``zero``, ``indicator:r`` (1 when ||x - y|| > r),
    ``floor`` (floor of the euclidean distance), ``discrete`` (1 when the
    atoms differ, works on opaque labels) and ``table`` (explicit n x m table;
    rows are then addressed by atom index).

    Attributes:
        name (str): cost family
        param (float | None): family parameter
        table (np.ndarray | None): explicit values for ``table`` costs
    """

    name: str
    param: float | None = None
    table: np.ndarray | None = field(default=None, compare=False)

    @property
    def label(self) -> str:
        if self.param is None:
            return self.name
        short = f"{self.param:g}"
        # the label is parsed back by Monte Carlo, so it must round-trip
        return f"{self.name}:{short if float(short) == self.param else repr(self.param)}"

    def pairwise(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        if self.name == "table":
            return np.asarray(self.table, dtype=float)
        if self.name == "discrete":
            X = np.asarray(X)
            Y = np.asarray(Y)
            if X.ndim == 2 and Y.ndim == 2:
                return (cdist(X, Y, "chebyshev") > 0).astype(float)
            return (X.reshape(-1, 1) != Y.reshape(1, -1)).astype(float)
        X = np.asarray(X, dtype=float).reshape(len(X), -1)
        Y = np.asarray(Y, dtype=float).reshape(len(Y), -1)
        if self.name == "sq_euclidean":
            return cdist(X, Y, "sqeuclidean")
        if self.name == "euclidean":
            return cdist(X, Y, "euclidean")
        if self.name == "lp":
            return cdist(X, Y, "minkowski", p=self.param) ** self.param
        if self.name == "constant":
            return np.full((X.shape[0], Y.shape[0]), float(self.param))
        if self.name == "zero":
            return np.zeros((X.shape[0], Y.shape[0]))
        if self.name == "indicator":
            return (cdist(X, Y, "euclidean") > self.param).astype(float)
        if self.name == "floor":
            return np.floor(cdist(X, Y, "euclidean"))
        raise UnknownCostError(messages.UNKNOWN_COST.format(name=self.name))

    def row(self, x, Y: np.ndarray) -> np.ndarray:
        """
        Cost c(x, y_j) for one query point against all atoms of Y.

        For ``table`` costs ``x`` is the row index of a support atom.
        """
        if self.name == "table":
            return np.asarray(self.table, dtype=float)[int(np.ravel(x)[0])]
        if self.name == "discrete" and np.asarray(Y).ndim == 1:
            return self.pairwise(np.asarray([x], dtype=object), Y)[0]
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.pairwise(x.reshape(1, -1), Y)[0]


def parse_cost(spec: str | CostFunction, table: np.ndarray | None = None) -> CostFunction:
    """
    Parse a cost name such as ``euclidean`` or ``lp:3``.

    Args:
        spec (str | CostFunction): cost name, optionally with ``:param``
        table (np.ndarray | None): explicit values when spec is ``table``

    Returns:
        CostFunction

    Raises:
        UnknownCostError: unknown family or missing parameter
    """
    if isinstance(spec, CostFunction):
        return spec
    name, _, raw = spec.strip().partition(":")
    if name == "table":
        if table is None:
            raise UnknownCostError(messages.UNKNOWN_COST.format(name=spec))
        return CostFunction("table", table=np.asarray(table, dtype=float))
    if name in SIMPLE_COSTS and not raw:
        return CostFunction(name)
    if name in PARAMETRIC_COSTS and raw:
        try:
            return CostFunction(name, float(raw))
        except ValueError:
            pass
    raise UnknownCostError(messages.UNKNOWN_COST.format(name=spec))


def from_samples(points: SampleSet | Sequence) -> DiscreteMeasure:
    """
    Empirical measure with uniform weights; duplicate points stay distinct atoms.

    Raises:
        EmptySampleError: no points
    """
    atoms = points.points if isinstance(points, SampleSet) else np.asarray(points)
    if len(atoms) == 0:
        raise EmptySampleError(messages.EMPTY_SAMPLE)
    n = len(atoms)
    return DiscreteMeasure(atoms=atoms, weights=np.full(n, 1.0 / n))


def build_cost(
    cost_fn: str | CostFunction,
    X: DiscreteMeasure,
    Y: DiscreteMeasure,
    epsilon: float,
    table: np.ndarray | None = None,
) -> CostContext:
    """
    Evaluate a bounded cost on the product support of X and Y.

    Raises:
        UnknownCostError: unknown cost name
        ShapeMismatchError: custom table does not match |X| x |Y|
        UnboundedCostError: non-finite value
    """
    cost = parse_cost(cost_fn, table)
    values = cost.pairwise(X.atoms, Y.atoms)
    expected = (len(X), len(Y))
    if values.shape != expected:
        raise ShapeMismatchError(
            messages.COST_SHAPE_MISMATCH.format(actual=values.shape, expected=expected)
        )
    return CostContext(cost_values=values, epsilon=float(epsilon), cost_name=cost.label)


def load_samples(path: str | Path, fmt: str = "csv", header: bool = False) -> SampleSet:
    return SampleRepository().load_samples(path, fmt, header=header)


@dataclass(frozen=True)
class SampleGenerator:
    """
    Named distribution that ``sample_from`` draws from

    Attributes:
        name (str): ``finite``, ``normal`` or ``uniform``
        dim (int): dimension of the generated points
        atoms (np.ndarray | None): support of a finite generator
        probs (np.ndarray | None): probabilities of a finite generator
    """

    name: str
    dim: int = 1
    atoms: np.ndarray | None = field(default=None, compare=False)
    probs: np.ndarray | None = field(default=None, compare=False)


def parse_generator(spec: str | Mapping | SampleGenerator | DiscreteMeasure) -> SampleGenerator:
    """
    Accepts ``normal:d``, ``uniform:d``, a mapping ``{point: probability}``
    or a finite :class:`DiscreteMeasure`.
    """
    if isinstance(spec, SampleGenerator):
        return spec
    if isinstance(spec, DiscreteMeasure):
        return SampleGenerator("finite", spec.atoms.shape[1], spec.atoms, spec.weights)
    if isinstance(spec, Mapping):
        atoms = np.array([np.atleast_1d(np.asarray(k, dtype=float)) for k in spec.keys()])
        probs = np.array(list(spec.values()), dtype=float)
        return SampleGenerator("finite", atoms.shape[1], atoms, probs / probs.sum())
    name, _, raw = str(spec).partition(":")
    if name in ("normal", "uniform"):
        try:
            return SampleGenerator(name, int(raw) if raw else 1)
        except ValueError:
            pass
    raise UnknownGeneratorError(messages.UNKNOWN_GENERATOR.format(name=spec))


def sample_from(generator, n: int, seed: int | np.random.Generator) -> SampleSet:
    """
    Draw n points; a pure function of (generator, n, seed).

    Args:
        generator: see :func:`parse_generator`
        n (int): number of points, at least 1
        seed (int | np.random.Generator): seed or an already seeded generator

    Returns:
        SampleSet
    """
    if n < 1:
        raise EmptySampleError(messages.INVALID_SAMPLE_SIZE)
    gen = parse_generator(generator)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if gen.name == "finite":
        idx = rng.choice(len(gen.probs), size=n, p=gen.probs)
        points = gen.atoms[idx]
    elif gen.name == "normal":
        points = rng.standard_normal((n, gen.dim))
    else:
        points = rng.random((n, gen.dim))
    source = f"{gen.name}:seed={seed}" if not isinstance(seed, np.random.Generator) else gen.name
    return SampleSet(points=points, source=source)
