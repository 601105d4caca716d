import math

import numpy as np
import pytest

from src.domain.errors import (
    EmptySampleError,
    InvalidMeasureError,
    UnboundedCostError,
    UnknownCostError,
    UnknownGeneratorError,
)
from src.domain.models import CostContext, DiscreteMeasure
from src.services.measures_service import (
    build_cost,
    from_samples,
    parse_cost,
    parse_generator,
    sample_from,
)
from tests.conftest import uniform


def test_from_samples_uniform_weights():
    measure = from_samples([[0.0], [1.0], [2.0], [3.0]])
    np.testing.assert_allclose(measure.weights, [0.25] * 4)


def test_from_samples_single_point_is_dirac():
    measure = from_samples([[5.0]])
    assert len(measure) == 1
    assert measure.weights[0] == 1.0


def test_from_samples_keeps_duplicates():
    measure = from_samples([[1.0], [1.0], [2.0]])
    assert len(measure) == 3
    np.testing.assert_allclose(measure.weights, [1 / 3] * 3)


def test_from_samples_empty():
    with pytest.raises(EmptySampleError):
        from_samples([])


def test_measure_rejects_unnormalized_weights():
    with pytest.raises(InvalidMeasureError):
        DiscreteMeasure(atoms=np.array([0.0, 1.0]), weights=np.array([0.5, 0.6]))


def test_measure_rejects_length_mismatch():
    with pytest.raises(InvalidMeasureError):
        DiscreteMeasure(atoms=np.array([0.0, 1.0, 2.0]), weights=np.array([0.5, 0.5]))


def test_euclidean_single_pair():
    ctx = build_cost("euclidean", uniform([0.0]), uniform([1.0]), 1.0)
    np.testing.assert_allclose(ctx.cost_values, [[1.0]])
    np.testing.assert_allclose(ctx.gibbs_values, [[math.exp(-1)]], rtol=1e-14)


def test_constant_cost():
    ctx = build_cost("constant:2", uniform([0.0, 1.0]), uniform([3.0, 4.0]), 1.0)
    assert ctx.sup_bound == 2.0
    np.testing.assert_allclose(ctx.gibbs_values, np.full((2, 2), math.exp(-2)), rtol=1e-14)


def test_sq_euclidean_matches_double_loop(f1):
    ctx = build_cost("sq_euclidean", f1.P, f1.Q, 1.0)
    expected = np.zeros((len(f1.P), len(f1.Q)))
    for i, x in enumerate(f1.P.atoms):
        for j, y in enumerate(f1.Q.atoms):
            expected[i, j] = sum((a - b) ** 2 for a, b in zip(x, y))
    np.testing.assert_allclose(ctx.cost_values, expected, rtol=0, atol=1e-14)


def test_lp_cost_is_pth_power():
    P = DiscreteMeasure(atoms=np.array([[0.0, 0.0]]), weights=np.array([1.0]))
    Q = DiscreteMeasure(atoms=np.array([[1.0, 2.0]]), weights=np.array([1.0]))
    ctx = build_cost("lp:3", P, Q, 1.0)
    np.testing.assert_allclose(ctx.cost_values, [[1.0 + 8.0]])


def test_discrete_cost_on_labels():
    P = DiscreteMeasure(atoms=np.array(["a", "b"], dtype=object), weights=np.array([0.5, 0.5]))
    Q = DiscreteMeasure(atoms=np.array(["a", "c"], dtype=object), weights=np.array([0.5, 0.5]))
    ctx = build_cost("discrete", P, Q, 1.0)
    np.testing.assert_array_equal(ctx.cost_values, [[0.0, 1.0], [1.0, 1.0]])


def test_unbounded_cost():
    with pytest.raises(UnboundedCostError):
        CostContext(cost_values=np.array([[0.0, np.inf]]), epsilon=1.0)


def test_non_positive_epsilon():
    with pytest.raises(InvalidMeasureError):
        CostContext(cost_values=np.zeros((1, 1)), epsilon=0.0)


@pytest.mark.parametrize("spec", ["manhattan", "lp", "lp:x", "euclidean:2"])
def test_unknown_cost(spec):
    with pytest.raises(UnknownCostError):
        parse_cost(spec)


@pytest.mark.parametrize(
    "spec, label",
    [("lp:3", "lp:3"), ("constant:2", "constant:2"), ("indicator:0.4999999", "indicator:0.4999999"), ("lp:1.0000001", "lp:1.0000001")],
)
def test_cost_label_round_trips(spec, label):
    P = uniform([0.0, 1.0])
    Q = uniform([0.5, 2.0])
    cost = parse_cost(spec)
    assert cost.label == label
    np.testing.assert_array_equal(parse_cost(cost.label).pairwise(P.atoms, Q.atoms), cost.pairwise(P.atoms, Q.atoms))


def test_cost_label_keeps_full_precision():
    param = 0.1 + 0.2
    assert parse_cost(parse_cost(f"indicator:{param!r}").label).param == param


def test_cost_row_matches_pairwise(f2):
    cost = parse_cost("sq_euclidean")
    row = cost.row(np.array([1.0]), f2.Q.atoms)
    np.testing.assert_allclose(row, cost.pairwise(f2.P.atoms, f2.Q.atoms)[1])


def test_sample_from_frequency():
    points = sample_from({0.0: 0.5, 1.0: 0.5}, 1_000_000, seed=11)
    frequency = float(np.mean(points.points[:, 0] == 0.0))
    assert abs(frequency - 0.5) <= 0.005


def test_sample_from_single_point_in_support():
    points = sample_from({0.0: 0.2, 4.0: 0.8}, 1, seed=3)
    assert len(points) == 1
    assert points.points[0, 0] in (0.0, 4.0)


def test_sample_from_is_deterministic():
    first = sample_from("normal:2", 50, seed=9)
    second = sample_from("normal:2", 50, seed=9)
    np.testing.assert_array_equal(first.points, second.points)
    assert first.points.shape == (50, 2)


def test_sample_from_uniform_in_unit_cube():
    points = sample_from("uniform:3", 200, seed=1)
    assert np.all((points.points >= 0) & (points.points < 1))


def test_sample_from_measure(f2):
    points = sample_from(f2.P, 100, seed=0)
    assert set(np.unique(points.points[:, 0])) <= {0.0, 1.0, 2.0}


def test_unknown_generator():
    with pytest.raises(UnknownGeneratorError):
        parse_generator("cauchy:1")


def test_sample_from_zero_points():
    with pytest.raises(EmptySampleError):
        sample_from("normal:1", 0, seed=0)
