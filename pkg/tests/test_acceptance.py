"""Acceptance suite: the ten criteria at their stated sizes and tolerances.

Each test records a single PASS/FAIL line, collected in the pytest terminal
summary under "acceptance criteria".
"""

import time

import numpy as np
import pytest

from semilab._accel import USE_NUMBA
from semilab.filtration import Anchored, Join, Natural, PartitionEnlarged
from semilab.grid_path import SamplePath, TimeGrid
from semilab.integrate import PredictableIntegrand, evaluate_route
from semilab.pathwise import pathwise_integral, pathwise_qv
from semilab.simulate import Seed, brownian_ensemble, gen_brownian
from semilab.experiments import ExperimentConfig, run_experiment

pytestmark = pytest.mark.slow

SEED = 42


def _metrics(report):
    return {m.name: m for m in report.metrics}


def _summary(report):
    return ", ".join(f"{m.name}={m.estimate:.6g}" for m in report.metrics)


def test_criterion_1_pathwise_qv(acceptance):
    grid = TimeGrid.uniform(2**16)
    start = time.perf_counter()
    qv = []
    for first in range(0, 1000, 100):
        ens = brownian_ensemble(grid, SEED, 100, first_stream=first)
        qv.extend(float(pathwise_qv(ens.path(i), 8).values[-1]) for i in range(len(ens)))
    elapsed = time.perf_counter() - start
    qv = np.array(qv)
    mean = qv.mean()
    inside = np.mean((qv >= 0.9) & (qv <= 1.1))
    timed_ok = elapsed <= 60.0 or not USE_NUMBA
    ok = 0.99 <= mean <= 1.01 and inside >= 0.99 and timed_ok
    acceptance(1, ok, f"mean QV {mean:.5f}, {inside:.1%} of paths in [0.9, 1.1], "
                      f"{elapsed:.1f}s ({'numba' if USE_NUMBA else 'numpy fallback, time not bounded'})")
    assert ok


def test_criterion_2_filtration_independence(acceptance):
    g = TimeGrid.uniform(4096)
    w = gen_brownian(g, Seed(SEED))
    u = np.cos(w.values)
    nat = Natural()
    models = [nat, PartitionEnlarged(nat, "sign_w1", "sign(W_1)"), Anchored(nat, (1.0,)),
              Join(Anchored(nat, (0.5,)), Anchored(nat, (1.0,)))]
    outs = [evaluate_route("pathwise", PredictableIntegrand(u, 1.0, m), w, 10).values for m in models]
    direct = pathwise_integral(SamplePath(g, u), w, 10).path.values
    ok = all(np.array_equal(o, direct) for o in outs)
    acceptance(2, ok, f"pathwise integral bit-identical under {len(models)} filtration tags")
    assert ok


def test_criterion_3_dyadic_dichotomy(acceptance):
    start = time.perf_counter()
    report = run_experiment(ExperimentConfig("E2", seed=SEED, scenarios=10_000, level=14))
    elapsed = time.perf_counter() - start
    timed_ok = elapsed <= 120.0 or not USE_NUMBA
    ok = report.passed and timed_ok
    acceptance(3, ok, f"{_summary(report)}; {elapsed:.1f}s")
    assert ok


def test_criterion_4_anchored_enlargement(acceptance):
    report = run_experiment(ExperimentConfig("E3", seed=SEED, scenarios=10_000, level=12, alpha=0.01))
    ci = _metrics(report)["covariance_sigma_gap"].ci
    acceptance(4, report.passed, f"{_summary(report)}; covariance 95% CI at (0.25, 0.75) = [{ci[0]:.4f}, {ci[1]:.4f}]")
    assert report.passed


def test_criterion_5_non_inclusion_witness(acceptance):
    report = run_experiment(ExperimentConfig("E3b", seed=SEED, level=16, ladder_min=10))
    acceptance(5, report.passed, _summary(report))
    assert report.passed


def test_criterion_6_pairflip(acceptance):
    report = run_experiment(ExperimentConfig("E4", seed=SEED, scenarios=10_000, level=4, ladder_min=2))
    acceptance(6, report.passed, _summary(report))
    assert report.passed


def test_criterion_7_difference_process(acceptance):
    report = run_experiment(ExperimentConfig("E5", seed=SEED))
    acceptance(7, report.passed, _summary(report))
    assert report.passed


def test_criterion_8_decompositions(acceptance):
    report = run_experiment(ExperimentConfig("E7", seed=SEED, scenarios=10_000))
    acceptance(8, report.passed, _summary(report))
    assert report.passed


def test_criterion_9_time_change(acceptance):
    report = run_experiment(ExperimentConfig("E8", seed=SEED, scenarios=1000))
    m = _metrics(report)
    ok = all(m[k].passed for k in ("lipschitz_fraction", "mollifier_one_sided", "window_bound_all_runs"))
    acceptance(9, ok and report.passed, _summary(report))
    assert ok and report.passed


def test_criterion_10_nested_equality(acceptance):
    report = run_experiment(ExperimentConfig("E1", seed=SEED, level=14, ladder_min=10))
    acceptance(10, report.passed, _summary(report))
    assert report.passed
