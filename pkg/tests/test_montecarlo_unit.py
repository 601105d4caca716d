import numpy as np
import pytest
from pydantic import ValidationError

from src.domain.errors import ConfigSchemaError
from src.schemas import SimConfig, TargetSpec
from src.services import montecarlo_service
from src.services.montecarlo_service import (
    child_rng,
    run_consistency,
    run_coverage,
    run_degeneracy,
    target_truths,
    validate_targets,
)
from src.services.oracle_service import PopulationOracle

ZERO_POPULATION = {
    "name": "zero",
    "cost": "zero",
    "P": {"atoms": [0.0, 1.0], "weights": [0.5, 0.5]},
    "Q": {"atoms": [2.0, 3.0], "weights": [0.5, 0.5]},
}


def _config(**overrides) -> SimConfig:
    body = {"population": "F1", "n": 8, "m": 8, "reps": 4, "targets": [{"kind": "cost"}], "seed": 3}
    body.update(overrides)
    return SimConfig.model_validate(body)


def test_child_rng_is_pure():
    first = child_rng(7, 2).random(5)
    again = child_rng(7, 2).random(5)
    other = child_rng(7, 3).random(5)
    np.testing.assert_array_equal(first, again)
    assert not np.array_equal(first, other)


def test_zero_cost_single_replication_is_covered():
    config = _config(population=ZERO_POPULATION, n=2, m=2, reps=1)
    report = run_coverage(config, workers=1)
    target = report.targets["cost"]
    assert target.truth == pytest.approx(0.0, abs=1e-15)
    assert target.coverage == 1.0
    assert target.bias == pytest.approx(0.0, abs=1e-15)
    assert target.width_mean == 0.0
    assert target.ks is None
    assert target.reps_valid == 1


def test_replications_use_the_population_cost():
    population = {
        "name": "near-threshold",
        "cost": "indicator:0.4999999",
        "P": {"atoms": [0.0], "weights": [1.0]},
        "Q": {"atoms": [0.5], "weights": [1.0]},
    }
    report = run_coverage(_config(population=population, n=2, m=2, reps=1), workers=1)
    target = report.targets["cost"]
    assert target.truth == pytest.approx(1.0, abs=1e-12)
    assert target.bias == pytest.approx(0.0, abs=1e-12)


def test_same_seed_same_report():
    config = _config(targets=[{"kind": "cost"}, {"kind": "coloc", "thresholds": [0.5, 2.0]}])
    first = run_coverage(config, workers=1)
    second = run_coverage(config, workers=1)
    assert first.deterministic_dump() == second.deterministic_dump()
    assert set(first.targets) == {"cost", "coloc[t=0.5]", "coloc[t=2]"}


def test_parallel_matches_serial():
    config = _config(reps=6, targets=[{"kind": "cost"}, {"kind": "sinkhorn"}])
    serial = run_coverage(config, workers=1)
    parallel = run_coverage(config, workers=2)
    assert serial.deterministic_dump() == parallel.deterministic_dump()


def test_pool_released_when_a_replication_raises(mocker):
    pool = mocker.MagicMock()
    pool.map.side_effect = RuntimeError("worker crashed")
    mocker.patch("src.services.montecarlo_service.Pool", return_value=pool)
    with pytest.raises(RuntimeError):
        run_coverage(_config(reps=2), workers=2)
    pool.close.assert_called_once()
    pool.join.assert_called_once()
    pool.clear.assert_called_once()


def test_different_seed_changes_estimates():
    first = run_coverage(_config(seed=1), workers=1)
    second = run_coverage(_config(seed=2), workers=1)
    assert first.targets["cost"].bias != second.targets["cost"].bias


def test_invalid_replications_are_excluded(mocker):
    real = montecarlo_service.replicate
    calls = {"count": 0}

    def flaky(*args, **kwargs):
        calls["count"] += 1
        if calls["count"] == 1:
            return None, {}
        return real(*args, **kwargs)

    mocker.patch("src.services.montecarlo_service.replicate", side_effect=flaky)
    report = run_coverage(_config(reps=3), workers=1)
    assert calls["count"] == 3
    assert report.reps_invalid == 1
    assert report.targets["cost"].reps_valid == 2
    assert report.targets["cost"].reps_invalid == 1


def test_all_replications_invalid(mocker):
    mocker.patch("src.services.montecarlo_service.replicate", return_value=(None, {}))
    report = run_coverage(_config(reps=2), workers=1)
    assert report.targets["cost"].coverage is None
    assert report.targets["cost"].reps_valid == 0
    assert report.reps_invalid == 2


def test_validate_targets_rejects_csv_eta(tmp_path):
    path = tmp_path / "eta.csv"
    path.write_text("1,0\n0,1\n", encoding="utf-8")
    targets = [TargetSpec(kind="cost"), TargetSpec(kind="plan", eta=str(path))]
    with pytest.raises(ConfigSchemaError) as excinfo:
        validate_targets(targets)
    assert excinfo.value.keys == ["targets.1.eta"]


def test_validate_targets_accepts_named_eta():
    validate_targets([TargetSpec(kind="plan", eta="indicator:0.5"), TargetSpec(kind="cond", eta="coord:0", x0=[0.0])])


@pytest.mark.parametrize(
    "spec, label",
    [
        ({"kind": "cost"}, "cost"),
        ({"kind": "plan", "eta": "cost"}, "plan[cost]"),
        ({"kind": "cond", "eta": "coord:0", "x0": [0.0]}, "cond[coord:0,x0=[0.0]]"),
        ({"kind": "map", "x0": [1.0]}, "map[x0=[1.0]]"),
    ],
)
def test_target_labels(spec, label):
    assert TargetSpec(**spec).label == label


@pytest.mark.parametrize(
    "spec",
    [{"kind": "plan"}, {"kind": "cond", "eta": "cost"}, {"kind": "coloc"}, {"kind": "cost", "colour": 1}],
)
def test_target_spec_rejected(spec):
    with pytest.raises(ValidationError):
        TargetSpec(**spec)


def test_target_truths_labels(f2):
    oracle = PopulationOracle(f2)
    coloc = target_truths(oracle, TargetSpec(kind="coloc", thresholds=[0.5, 2.25]))
    assert [label for label, _, _ in coloc] == ["coloc[t=0.5]", "coloc[t=2.25]"]
    mapped = target_truths(oracle, TargetSpec(kind="map", x0=[0.0]))
    assert [label for label, _, _ in mapped] == ["map[x0=[0.0]][0]"]
    assert all(sigma2 >= 0 for _, _, sigma2 in coloc + mapped)


def test_consistency_constant_cost():
    population = dict(ZERO_POPULATION, cost="constant:2")
    config = _config(population=population)
    report = run_consistency(config, sizes=[5], seeds=2)
    assert len(report.rows) == 1
    row = report.rows[0]
    assert row.n == 5
    assert row.truth == pytest.approx(0.0, abs=1e-20)
    assert row.mean_rel_error < 1e-12
    assert row.seeds_valid == 2


def test_consistency_ladder_rows(f1):
    config = _config(targets=[{"kind": "cost"}, {"kind": "sinkhorn"}])
    report = run_consistency(config, population=f1, sizes=[4, 8], seeds=2)
    assert [(row.n, row.target) for row in report.rows] == [
        (4, "cost"),
        (4, "sinkhorn"),
        (8, "cost"),
        (8, "sinkhorn"),
    ]


def test_degeneracy_shapes(f1):
    report = run_degeneracy(f1, sizes=(5, 10), seeds=3)
    assert report.sizes == [5, 10]
    assert all(len(report.variances[size]) == 3 for size in (5, 10))
    assert all(value >= 0 for values in report.variances.values() for value in values)
