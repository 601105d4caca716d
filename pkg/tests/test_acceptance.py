"""
Long-running Monte Carlo checks on the shipped fixtures.

Excluded from the default run; use ``pytest -m slow``.
"""

import numpy as np
import pytest

from src.domain.models import FinitePopulation
from src.schemas import SimConfig
from src.services.measures_service import build_cost
from src.services.montecarlo_service import run_consistency, run_coverage, run_degeneracy
from src.services.oracle_service import PopulationOracle

pytestmark = pytest.mark.slow

COVERAGE_TARGETS = [
    {"kind": "cost"},
    {"kind": "sinkhorn"},
    {"kind": "plan", "eta": "cost"},
    {"kind": "cond", "eta": "coord:0", "x0": [0.0]},
    {"kind": "map", "x0": [0.0]},
    {"kind": "divergence"},
    {"kind": "coloc", "thresholds": [1.0, 4.0]},
]


def test_coverage_on_f2():
    config = SimConfig.model_validate(
        {"population": "F2", "n": 500, "m": 500, "reps": 1000, "level": 0.95, "targets": COVERAGE_TARGETS, "seed": 11}
    )
    report = run_coverage(config)
    assert len(report.targets) == 8
    for label, target in report.targets.items():
        assert 0.90 <= target.coverage <= 0.98, label
        assert target.reps_valid == 1000
    assert report.reps_invalid == 0


def test_variance_consistency_on_f2():
    config = SimConfig.model_validate(
        {
            "population": "F2",
            "n": 100,
            "m": 100,
            "reps": 1,
            "targets": [{"kind": "cost"}, {"kind": "plan", "eta": "cost"}, {"kind": "cond", "eta": "coord:0", "x0": [0.0]}],
            "seed": 5,
        }
    )
    report = run_consistency(config, sizes=[100, 500, 2000], seeds=50)
    by_target: dict[str, dict[int, float]] = {}
    for row in report.rows:
        by_target.setdefault(row.target, {})[row.n] = row.mean_rel_error
    assert len(by_target) == 3
    for label, errors in by_target.items():
        assert errors[2000] < errors[100], label
        assert errors[2000] < 0.10, label


def test_studentized_cost_pivots_are_normal():
    config = SimConfig.model_validate(
        {"population": "F2", "n": 1000, "m": 1000, "reps": 2000, "targets": [{"kind": "cost"}], "seed": 17}
    )
    report = run_coverage(config)
    assert report.targets["cost"].ks_pvalue > 0.01


def test_divergence_variance_degenerates_when_measures_agree(f2):
    same = FinitePopulation(
        P=f2.P, Q=f2.P, ctx=build_cost(f2.cost_name, f2.P, f2.P, f2.ctx.epsilon), cost_name=f2.cost_name, name="F2PP"
    )
    report = run_degeneracy(same, sizes=(100, 2000), seeds=50, seed=23)
    small, large = np.array(report.variances[100]), np.array(report.variances[2000])
    assert np.sum(large < small) >= 45
    reference = PopulationOracle(f2).exact_sigma_divergence()
    assert np.all(small < reference)
    assert np.all(large < reference)


def test_truncated_and_direct_plan_variances_agree():
    # F2's composite operator has top eigenvalue near 0.67; at N = 40 the tail is below 1e-6
    body = {
        "population": "F2",
        "n": 2000,
        "m": 2000,
        "reps": 1,
        "targets": [{"kind": "plan", "eta": "cost"}],
        "seed": 29,
    }
    errors = []
    for mode in ("direct", 40):
        config = SimConfig.model_validate({**body, "N_mode": mode})
        report = run_consistency(config, sizes=[2000], seeds=50)
        assert report.N_mode == mode
        errors.append(report.rows[0].mean_rel_error)
    assert abs(errors[0] - errors[1]) < 0.01
