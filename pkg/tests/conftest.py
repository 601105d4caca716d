import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from main import app
from src.domain.models import CostContext, DiscreteMeasure, FinitePopulation
from src.repository.fixtures_repository import FixtureRepository
from src.services.measures_service import build_cost, parse_cost
from src.services.sinkhorn_service import EntropicProblem

SYMMETRIC_F = -math.log((1 + math.exp(-1)) / 2)
SYMMETRIC_XI_DIAG = 2 / (1 + math.exp(-1))
SYMMETRIC_XI_OFF = 2 * math.exp(-1) / (1 + math.exp(-1))
SYMMETRIC_SINKHORN = math.exp(-1) / (1 + math.exp(-1))


def uniform(points) -> DiscreteMeasure:
    atoms = np.asarray(points, dtype=float)
    return DiscreteMeasure(atoms=atoms, weights=np.full(len(atoms), 1.0 / len(atoms)))


@pytest.fixture
def f1() -> FinitePopulation:
    return FixtureRepository().load("F1")


@pytest.fixture
def f2() -> FinitePopulation:
    return FixtureRepository().load("F2")


@pytest.fixture
def symmetric():
    """
    P = Q uniform on two labels with the discrete cost, epsilon = 1.
    """
    P = uniform([0.0, 1.0])
    Q = uniform([0.0, 1.0])
    ctx = CostContext(cost_values=np.array([[0.0, 1.0], [1.0, 0.0]]), epsilon=1.0, cost_name="discrete")
    return P, Q, ctx


@pytest.fixture
def symmetric_problem() -> EntropicProblem:
    return EntropicProblem(uniform([0.0, 1.0]), uniform([0.0, 1.0]), "discrete", 1.0)


@pytest.fixture
def random_instance():
    """
    Factory for random bounded-cost instances with random weights.
    """

    def make(seed: int, n: int = 3, m: int = 4, bound: float = 5.0, epsilon: float = 1.0):
        rng = np.random.default_rng(seed)
        v = rng.random(n) + 0.1
        w = rng.random(m) + 0.1
        P = DiscreteMeasure(atoms=np.arange(n, dtype=float), weights=v / v.sum())
        Q = DiscreteMeasure(atoms=np.arange(m, dtype=float), weights=w / w.sum())
        ctx = CostContext(cost_values=rng.uniform(-bound, bound, (n, m)), epsilon=epsilon)
        return P, Q, ctx

    return make


@pytest.fixture
def zero_cost_problem() -> EntropicProblem:
    return EntropicProblem(uniform([0.0, 1.0, 3.0]), uniform([0.5, 2.0]), "zero", 1.0)


@pytest.fixture
def f2_problem(f2) -> EntropicProblem:
    """
    Problem on the full F2 supports with their true weights.
    """
    return EntropicProblem(f2.P, f2.Q, parse_cost(f2.cost_name), f2.ctx.epsilon)


@pytest.fixture
def sample_files(tmp_path):
    """
    Writes two small one-dimensional CSV sample files.
    """
    x = tmp_path / "x.csv"
    y = tmp_path / "y.csv"
    x.write_text("0.0\n0.4\n1.0\n1.3\n2.0\n", encoding="utf-8")
    y.write_text("0.1\n0.5\n1.5\n2.5\n3.0\n0.9\n", encoding="utf-8")
    return x, y


@pytest.fixture
def client():
    return TestClient(app)


@pytest.fixture
def cost_context():
    def make(P: DiscreteMeasure, Q: DiscreteMeasure, cost: str = "sq_euclidean", epsilon: float = 1.0):
        return build_cost(cost, P, Q, epsilon)

    return make
