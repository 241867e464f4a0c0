import csv
import json

import pytest

from semilab.experiments import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    ExperimentReport,
    ResourceCapError,
    export_plotdata,
    run_experiment,
)

SMALL = {
    "E1": dict(scenarios=100, level=10, ladder_min=8),
    "E3": dict(scenarios=1000, level=8, ladder_min=6),
    "E4": dict(scenarios=5000, level=3),
    "E5": dict(scenarios=100, level=10, ladder_min=8),
    "E6": dict(scenarios=50, level=8, ladder_min=8),
    "E7": dict(scenarios=500, level=5),
    "E8": dict(scenarios=30, level=10, ladder_min=2),
}


def test_unknown_experiment():
    with pytest.raises(ConfigError, match="unknown id"):
        ExperimentConfig("E9", seed=1)


def test_seed_is_mandatory():
    with pytest.raises(ConfigError, match="seed"):
        ExperimentConfig.from_dict({"experiment": "E1"})
    with pytest.raises(ConfigError, match="seed"):
        ExperimentConfig("E1", seed=None)
    with pytest.raises(ConfigError, match="seed"):
        ExperimentConfig("E1", seed=1.5)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown config key"):
        ExperimentConfig.from_dict({"experiment": "E1", "seed": 1, "paths": 3})


@pytest.mark.parametrize("kw", [dict(scenarios=0), dict(level=-1), dict(alpha=1.5), dict(epsilons=()),
                                dict(ladder_min=20), dict(chunk=0)])
def test_invalid_fields(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig("E2", seed=1, **kw)


def test_resolution_preconditions():
    with pytest.raises(ConfigError):
        ExperimentConfig("E8", seed=1, level=8)
    with pytest.raises(ConfigError):
        ExperimentConfig("E3b", seed=1, level=10, ladder_min=10)


def test_defaults_filled():
    cfg = ExperimentConfig("E4", seed=3)
    assert (cfg.scenarios, cfg.level, cfg.ladder_min) == (10000, 4, 2)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("exp", EXPERIMENTS)
def test_resource_cap(exp):
    cfg = ExperimentConfig(exp, seed=1, max_cells=10)
    with pytest.raises(ResourceCapError):
        run_experiment(cfg)


@pytest.mark.parametrize("exp", sorted(SMALL))
def test_small_runs_pass(exp):
    report = run_experiment(ExperimentConfig(exp, seed=7, **SMALL[exp]))
    assert report.experiment == exp
    assert report.passed, [m.to_dict() for m in report.metrics if not m.passed]


def test_e2_small_structure():
    report = run_experiment(ExperimentConfig("E2", seed=2, scenarios=300, level=8))
    by = {m.name: m for m in report.metrics}
    assert by["stieltjes_mass_exact"].passed
    assert by["stieltjes_verdict_divergent"].passed
    assert set(by) >= {"martingale_verdict_convergent", "limiting_variance_rel_error"}


def test_determinism_hash_and_timestamp():
    cfg = ExperimentConfig("E4", seed=11, scenarios=200, level=3)
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert a.determinism_hash() == b.determinism_hash()
    assert a.to_dict()["provenance"]["seed"] == 11
    c = run_experiment(ExperimentConfig("E4", seed=12, scenarios=200, level=3))
    assert c.determinism_hash() != a.determinism_hash()


def test_report_write(tmp_path):
    report = run_experiment(ExperimentConfig("E7", seed=1, **SMALL["E7"]))
    path = report.write(tmp_path)
    data = json.loads(path.read_text())
    assert data["experiment"] == "E7"
    assert data["verdict"] == "PASS"
    assert "timestamp" in data["provenance"]
    assert data["determinism_hash"] == report.determinism_hash()


def _read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_export_e2_ladder_rungs(tmp_path):
    report = run_experiment(ExperimentConfig("E2", seed=2, scenarios=300, level=8))
    paths = export_plotdata(report, tmp_path)
    assert all(p.parent == tmp_path for p in paths)
    rows = _read(tmp_path / "E2_martingale_verdict_convergent.csv")
    assert rows[0] == ["x", "y", "y_lo", "y_hi"]
    # successive-rung differences are labelled by the upper rung
    assert [float(r[0]) for r in rows[1:]] == [2.0**j for j in range(2, 9)]
    rows = _read(tmp_path / "E2_limiting_variance_rel_error.csv")
    assert [float(r[0]) for r in rows[1:]] == [2.0**j for j in range(1, 9)]


def test_export_e8_error_vs_n(tmp_path):
    report = run_experiment(ExperimentConfig("E8", seed=2, **SMALL["E8"]))
    export_plotdata(report, tmp_path)
    rows = _read(tmp_path / "E8_window_bound_all_runs.csv")
    xs = [float(r[0]) for r in rows[1:]]
    ys = [float(r[1]) for r in rows[1:]]
    assert xs == [4.0, 8.0, 16.0, 32.0, 64.0]
    assert all(y <= 2.0 / x for x, y in zip(xs, ys))


def test_export_empty_metrics(tmp_path):
    cfg = ExperimentConfig("E4", seed=1)
    with pytest.raises(ValueError, match="no metrics"):
        export_plotdata(ExperimentReport("E4", "empty", [], {}, cfg), tmp_path)


def test_export_unwritable(tmp_path):
    report = run_experiment(ExperimentConfig("E4", seed=1, scenarios=50, level=2))
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="cannot write"):
        export_plotdata(report, blocker / "sub")
