import numpy as np
import pytest

from mlesloo.design import initial_designs
from mlesloo.metrics import uniform_grid
from mlesloo.multilevel import MultiLevelEmulator
from mlesloo.problems import two_level_2d
from mlesloo.sampler import (Proposal, RunLog, SamplerConfig, SimulatorError, batch_mixed,
                             batch_same_level, level_cost, propose, run, step)

FAST = dict(n_candidates_per_dim=60, n_refine=2)


@pytest.fixture(scope="module")
def problem():
    return two_level_2d()


@pytest.fixture(scope="module")
def emulator(problem):
    d = initial_designs(problem, (8, 4), seed=2, n_starts=3)
    return MultiLevelEmulator.fit(d.X, d.y, d.y_low, rho=[1.0], costs=problem.costs, seed=2, n_starts=3)


def cfg(costs=(1.0, 8.0), **kw):
    base = dict(stopping="iterations", max_iterations=4, exploration_interval=0, seed=5, **FAST)
    base.update(kw)
    return SamplerConfig(costs=costs, **base)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(stopping="budget"), dict(stopping="bogus"),
                                    dict(stopping="iterations", max_iterations=None),
                                    dict(stopping="nrmse"), dict(batch_size=0),
                                    dict(batch_mode="sequential", batch_size=3),
                                    dict(batch_mode="other"), dict(exploration_interval=-1)])
    def test_rejects(self, kw):
        base = dict(stopping="iterations", max_iterations=3)
        base.update(kw)
        with pytest.raises(ValueError):
            SamplerConfig(costs=(1, 8), **base)

    def test_level_cost(self):
        assert level_cost((1, 8, 20), 1) == 1
        assert level_cost((1, 8, 20), 2) == 9
        assert level_cost((1, 8, 20), 3) == 28


class TestPropose:
    def test_returns_weighted_best(self, emulator):
        p = propose(emulator, cfg())
        assert p.level in (1, 2)
        assert p.weighted_pei == pytest.approx(p.raw_pei / level_cost((1, 8), p.level))
        assert np.all((p.x >= 0) & (p.x <= 1))

    def test_tie_goes_to_cheaper_level(self, emulator, monkeypatch):
        import mlesloo.sampler as sampler
        monkeypatch.setattr(sampler, "_best_on_surface", lambda s, c, seed: (np.full(2, 0.5), 9.0 if s == 2 else 1.0))
        monkeypatch.setattr(sampler, "_surfaces", lambda em, c, seed, levels: {l: l for l in levels})
        p = propose(emulator, cfg())
        assert p.level == 1

    def test_level_needs_two_points(self, problem):
        d = initial_designs(problem, (4, 1), seed=0, n_starts=2)
        em = MultiLevelEmulator.fit(d.X, d.y, d.y_low, costs=problem.costs, n_starts=2)
        with pytest.raises(ValueError):
            propose(em, cfg())

    def test_cost_scaling_invariance(self, problem, emulator):
        a = run(emulator, cfg((1.0, 8.0)), problem.simulators())
        b = run(emulator.with_costs((3.0, 24.0)), cfg((3.0, 24.0)), problem.simulators())
        assert [r.level for r in a.steps] == [r.level for r in b.steps]
        for ra, rb in zip(a.steps, b.steps):
            np.testing.assert_array_equal(ra.x, rb.x)


class TestRun:
    def test_cost_accounting(self, problem, emulator):
        log = run(emulator, cfg(max_iterations=6, exploration_interval=3), problem.simulators())
        n1 = sum(r.level == 1 for r in log.steps)
        n2 = sum(r.level == 2 for r in log.steps)
        assert log.cost_cum == pytest.approx(1.0 * n1 + 9.0 * n2)
        assert np.all(np.diff(log.curve()[0]) > 0)

    def test_exploration_steps(self, problem, emulator):
        log = run(emulator, cfg(max_iterations=4, exploration_interval=2), problem.simulators())
        flagged = [r for r in log.steps if r.exploration]
        assert [r.iteration for r in flagged] == [2, 4]
        assert all(r.level == 2 for r in flagged)

    def test_no_duplicates(self, problem, emulator):
        log = run(emulator, cfg(max_iterations=8), problem.simulators())
        for ld in log.emulator.levels:
            assert len(np.unique(ld.X, axis=0)) == ld.n

    def test_budget_stop(self, problem, emulator):
        log = run(emulator, cfg(stopping="budget", budget=12.0, max_iterations=None), problem.simulators())
        assert log.cost_cum <= 12.0
        assert 12.0 - log.cost_cum < 1.0 or all(r.level == 1 for r in log.steps[-1:])

    def test_budget_below_cheapest_step(self, problem, emulator):
        with pytest.raises(ValueError):
            run(emulator, cfg(stopping="budget", budget=0.5, max_iterations=None), problem.simulators())

    def test_nrmse_stop(self, problem, emulator):
        grid = uniform_grid(2, 15)
        log = run(emulator, cfg(stopping="nrmse", nrmse_target=10.0, max_iterations=None),
                  problem.simulators(), truth=problem.truth, test_grid=grid)
        assert log.steps == []

    def test_records_nrmse(self, problem, emulator):
        grid = uniform_grid(2, 15)
        log = run(emulator, cfg(max_iterations=2), problem.simulators(), truth=problem.truth, test_grid=grid)
        assert len(log.records) == 3
        assert all(np.isfinite(r.nrmse) for r in log.records)
        assert log.records[0].level == 0 and log.records[0].cost_cum == 0.0

    def test_deterministic(self, problem, emulator):
        a = run(emulator, cfg(max_iterations=3), problem.simulators())
        b = run(emulator, cfg(max_iterations=3), problem.simulators())
        assert a.to_csv() == b.to_csv()


class TestSimulatorFailure:
    def test_raises_with_iteration_and_keeps_state(self, problem, emulator):
        sims = problem.simulators()
        broken = [lambda x: float("nan"), lambda x: float("nan")]
        log = RunLog(dim=2)
        with pytest.raises(SimulatorError) as info:
            step(emulator, cfg(), log, broken, iteration=7)
        assert info.value.iteration == 7
        assert log.records == []
        assert emulator.level(1).n == 8 and emulator.level(2).n == 4
        assert sims  # the real simulators are untouched

    def test_exception_is_wrapped(self, problem, emulator):
        def boom(x):
            raise RuntimeError("solver diverged")
        with pytest.raises(SimulatorError, match="solver diverged"):
            run(emulator, cfg(), [boom, boom])


class TestBatches:
    def test_same_level_distinct(self, emulator):
        picks = batch_same_level(emulator, cfg(), 4, seed=1)
        assert len({p.level for p in picks}) == 1
        assert len(np.unique(np.array([p.x for p in picks]), axis=0)) == 4

    def test_mixed_respects_cost_cap(self, emulator):
        picks = batch_mixed(emulator, cfg(), 5, seed=1, max_cost=10.0)
        assert sum(p.cost_charged for p in picks) <= 10.0

    def test_mixed_first_pick_is_propose(self, emulator):
        first = batch_mixed(emulator, cfg(), 3, seed=4)[0]
        p = propose(emulator, cfg(), seed=4)
        assert first.level == p.level
        np.testing.assert_array_equal(first.x, p.x)

    @pytest.mark.parametrize("mode", ["same-level", "mixed"])
    def test_q1_matches_sequential(self, problem, emulator, mode):
        seq = run(emulator, cfg(max_iterations=3), problem.simulators())
        bat = run(emulator, cfg(max_iterations=3, batch_mode=mode, batch_size=1), problem.simulators())
        assert seq.to_csv() == bat.to_csv()

    def test_batch_run_budget(self, problem, emulator):
        log = run(emulator, cfg(stopping="budget", budget=20.0, max_iterations=None, batch_mode="mixed",
                                batch_size=3), problem.simulators())
        assert log.cost_cum <= 20.0
        assert max(r.iteration for r in log.steps) < len(log.steps) or len(log.steps) <= 3


class TestRunLogCsv:
    def test_columns_and_precision(self, problem, emulator, tmp_path):
        log = run(emulator, cfg(max_iterations=2), problem.simulators(), truth=problem.truth,
                  test_grid=uniform_grid(2, 10))
        path = tmp_path / "log.csv"
        text = log.to_csv(path)
        assert path.read_text() == text
        lines = text.splitlines()
        assert lines[0] == ("iteration,chosen_level,x1,x2,raw_pei,weighted_pei,cost_step,cost_cum,"
                            "nrmse,exploration_flag")
        assert len(lines) == 4
        assert lines[1].split(",")[2] == ""
        x1 = lines[2].split(",")[2]
        assert float(x1) == log.records[1].x[0]


class TestRunLogJson:
    def test_records_hyperparameters_and_proposals(self, problem, emulator):
        import json
        log = run(emulator, cfg(max_iterations=2), problem.simulators())
        data = json.loads(log.to_json())
        assert [r["iteration"] for r in data["records"]] == [0, 1, 2]
        step1 = data["records"][1]
        assert len(step1["level_pei"]) == 2
        assert len(step1["hyperparameters"]) == 2
        assert step1["x"] == [float(v) for v in log.records[1].x]
