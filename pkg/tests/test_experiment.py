import json

import numpy as np
import pytest

from mlesloo.experiment import (ExperimentConfig, band, batch_vs_sequential, checkpoints_for,
                                cost_ratio_sweep, dumps, run_experiment, single_vs_multi_comparison,
                                write_table)

FAST = dict(grid_per_axis=10, n_candidates_per_dim=60, n_refine=2, n_starts=3)


def small(**kw):
    base = dict(costs=(1.0, 8.0), max_iterations=3, seeds=(0, 1), **FAST)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def result():
    return run_experiment(small())


class TestRunExperiment:
    def test_counts_sum_to_iterations(self, result):
        for s, c in result.level_counts().items():
            assert c[1] + c[2] == 3

    def test_checkpoints_increasing(self, result):
        cp = result.curve["cost"]
        assert cp[0] == 0.0
        assert np.all(np.diff(cp) > 0)
        assert cp[-1] <= min(lg.cost_cum for lg in result.logs.values()) + 1e-9

    def test_band_ordered(self, result):
        c = result.curve
        assert np.all(c["q05"] <= c["median"] + 1e-15)
        assert np.all(c["median"] <= c["q95"] + 1e-15)

    def test_single_seed_band_is_the_curve(self, result):
        lg = result.logs[0]
        cp = checkpoints_for([lg])
        b = band([lg], cp)
        costs, values = lg.curve()
        np.testing.assert_array_equal(cp, costs)
        for key in ("median", "q05", "q95"):
            np.testing.assert_array_equal(b[key], values)

    def test_reproducible(self, result):
        again = run_experiment(small())
        for s in result.seeds:
            assert again.logs[s].to_csv() == result.logs[s].to_csv()

    def test_save(self, result, tmp_path):
        result.save(tmp_path)
        assert (tmp_path / "runlog_0.csv").exists()
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["seeds"] == [0, 1]
        assert summary["config"]["costs"] == [1.0, 8.0]


class TestComparisons:
    def test_sweep_rows(self):
        rows = cost_ratio_sweep(small(seeds=(0,), max_iterations=2), [2, 8])
        assert [r["ratio"] for r in rows] == [2.0, 8.0]
        for r in rows:
            assert r["level1_mean"] + r["level2_mean"] == 2
            assert r["nrmse_q05"] <= r["nrmse_median"] <= r["nrmse_q95"]

    def test_sweep_needs_ratios(self):
        with pytest.raises(ValueError):
            cost_ratio_sweep(small(), [])

    def test_single_vs_multi(self):
        out = single_vs_multi_comparison(small(seeds=(0,)), budget=60.0, n_checkpoints=11)
        assert len(out["cost"]) == 11
        assert out["cost"][-1] == 60.0
        np.testing.assert_allclose(out["median_difference"], out["differences"][0])
        single = out["single"][0]
        assert all(r.level in (0, 1) for r in single.records)
        assert single.cost_cum <= 60.0

    def test_batch_vs_sequential_budget(self):
        out = batch_vs_sequential(small(seeds=(0,)), budget=60.0, q=3)
        assert out["batch"].logs[0].cost_cum <= 60.0
        assert out["sequential"].logs[0].cost_cum <= 60.0


class TestPersistence:
    def test_floats_round_trip(self):
        x = 0.1 + 0.2
        text = dumps({"b": [x, np.float64(1 / 3)], "a": 1, "c": float("nan")})
        assert text.index('"a"') < text.index('"b"') < text.index('"c"')
        data = json.loads(text)
        assert data["b"][0] == x and data["b"][1] == 1 / 3
        assert data["c"] is None
        assert "0.30000000000000004" in text

    def test_table(self, tmp_path):
        path = tmp_path / "t.csv"
        write_table(path, [{"a": 1, "b": 0.5}, {"a": 2, "c": "x"}])
        assert path.read_text() == "a,b,c\n1,0.5,\n2,,x\n"

    def test_empty_seeds(self):
        with pytest.raises(ValueError):
            ExperimentConfig(seeds=())
