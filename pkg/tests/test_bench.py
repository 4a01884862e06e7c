import json

import numpy as np
import pytest

from gstars.bench import (
    METHODS,
    ExperimentConfig,
    SpeedupReport,
    oracle_select,
    recovery_metrics,
    repetition_seeds,
    run_benchmark,
    speedup_report,
)
from gstars.glasso import RegularizationGrid, fit_path, lambda_grid
from gstars.graph_core import ShapeError, UndirectedGraph, n_pairs
from gstars.synth import ConfigError


def tiny_config(**kw):
    d = dict(families=["hub"], settings=[[120, 8]], repetitions=1, N=4, K=6, ratio=0.1, seed=3)
    d.update(kw)
    return ExperimentConfig.from_dict(d)


class TestMetrics:
    def test_perfect(self):
        g = UndirectedGraph.from_edges(5, [(0, 1), (2, 3)])
        m = recovery_metrics(g, g)
        assert m.precision == m.recall == m.f1 == 1.0
        assert m.tp + m.fp + m.fn + m.tn == n_pairs(5)

    def test_empty_estimate(self):
        truth = UndirectedGraph.from_edges(5, [(0, 1)])
        m = recovery_metrics(UndirectedGraph.empty(5), truth)
        assert m.recall == 0.0 and m.f1 == 0.0 and m.precision == 0.0

    def test_complete_estimate(self):
        truth = UndirectedGraph.from_edges(6, [(0, 1), (2, 3), (4, 5)])
        full = UndirectedGraph(~np.eye(6, dtype=bool))
        m = recovery_metrics(full, truth)
        assert m.recall == 1.0
        assert m.precision == pytest.approx(3 / 15)
        assert m.fpr == 1.0

    def test_both_empty(self):
        m = recovery_metrics(UndirectedGraph.empty(4), UndirectedGraph.empty(4))
        assert m.f1 == 0.0 and m.fpr == 0.0

    def test_size_mismatch(self):
        with pytest.raises(ShapeError):
            recovery_metrics(UndirectedGraph.empty(4), UndirectedGraph.empty(5))


class TestOracle:
    def test_exact_recovery(self):
        theta = np.eye(4)
        theta[0, 1] = theta[1, 0] = 0.45
        S = np.linalg.inv(theta)
        truth = UndirectedGraph.from_edges(4, [(0, 1)])
        path = fit_path(S, lambda_grid(S, K=5, ratio=0.1))
        k, lam, f1 = oracle_select(path, truth)
        assert f1 == 1.0
        assert lam == path.grid[k]

    def test_single_point(self):
        S = np.array([[1.0, 0.3], [0.3, 1.0]])
        path = fit_path(S, RegularizationGrid([0.1]))
        assert oracle_select(path, UndirectedGraph.empty(2))[0] == 0

    def test_ties_go_to_larger_lambda(self):
        S = np.array([[1.0, 0.3], [0.3, 1.0]])
        # both grid points give the empty graph
        path = fit_path(S, RegularizationGrid([0.35, 0.4]))
        assert oracle_select(path, UndirectedGraph.from_edges(2, [(0, 1)]))[0] == 1


class TestConfig:
    def test_missing_required(self):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict({"families": ["hub"], "settings": [[100, 10]]})
        assert exc.value.field == "repetitions"

    def test_unknown_field(self):
        with pytest.raises(ConfigError) as exc:
            tiny_config(reps=2)
        assert exc.value.field == "reps"

    @pytest.mark.parametrize("field,value", [("families", ["tree"]), ("beta", 0.0), ("N", 1),
                                             ("methods", ["lasso"]), ("settings", [[10]])])
    def test_invalid(self, field, value):
        with pytest.raises(ConfigError) as exc:
            tiny_config(**{field: value})
        assert exc.value.field == field

    def test_yaml_file(self, tmp_path):
        path = tmp_path / "exp.yaml"
        path.write_text("families: [erdos_renyi]\nsettings: [[100, 10]]\nrepetitions: 2\n")
        cfg = ExperimentConfig.from_file(path)
        assert cfg.repetitions == 2 and cfg.methods == list(METHODS)

    def test_workers_not_serialized(self):
        assert "workers" not in tiny_config(workers=4).to_dict()

    def test_seeds_distinct(self):
        seeds = {repetition_seeds(0, s, r) for s in range(3) for r in range(5)}
        assert len(seeds) == 15
        assert repetition_seeds(0, 1, 2) == repetition_seeds(0, 1, 2)


@pytest.fixture(scope="module")
def report():
    return run_benchmark(tiny_config())


class TestBenchmark:
    def test_one_row_per_method(self, report):
        assert [r["method"] for r in report.runs] == list(METHODS)
        assert not report.failures
        assert len(report.gaps) == 1

    def test_oracle_dominates(self, report):
        f1 = {r["method"]: r["f1"] for r in report.runs}
        assert all(f1["oracle"] >= f1[m] for m in ("stars", "bstars", "gstars"))

    def test_gap_row(self, report):
        g = report.gaps[0]
        assert g["lambda_lb"] <= g["lambda_ub"]
        assert g["selection_match"] in (True, False)

    def test_summary(self, report):
        rows = report.summary()
        assert {r["method"] for r in rows} == set(METHODS)
        assert all(r["f1_std"] == 0 or np.isnan(r["f1_std"]) for r in rows)

    def test_write_deterministic(self, report, tmp_path):
        report.write(tmp_path / "a")
        run_benchmark(tiny_config()).write(tmp_path / "b")
        for name in ("runs.csv", "gaps.csv", "summary.csv", "report.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        json.loads((tmp_path / "a" / "report.json").read_text())
        assert (tmp_path / "a" / "timings.csv").exists()

    def test_subset_of_methods(self):
        rep = run_benchmark(tiny_config(methods=["stars", "oracle"]))
        assert [r["method"] for r in rep.runs] == ["stars", "oracle"]
        assert rep.gaps == []


class TestSpeedup:
    def test_flags(self):
        r = SpeedupReport(10.0, 2.0, 0.3, 0.2, 0.05)
        assert r.ratio == 5.0 and not r.identical and r.correctness_failure
        assert SpeedupReport(1.0, 1.0, 0.3, 0.3, 0.0).as_dict()["identical"]

    def test_small_problem_runs(self):
        r = speedup_report(n=120, p=10, N=4, K=6)
        assert r.stars_seconds > 0 and r.bstars_seconds > 0
        assert not r.correctness_failure
