import numpy as np
import pytest

from mlesloo.design import InitialDesign, initial_designs, latin_hypercube, maximin_lhc, min_distance
from mlesloo.metrics import nrmse, uniform_grid
from mlesloo.problems import TestProblem, compile_expression, get_problem, problem_from_spec, two_level_2d


class TestLatinHypercube:
    def test_one_point_per_bin(self, rng):
        X = latin_hypercube(7, 3, rng)
        for d in range(3):
            assert sorted(np.floor(X[:, d] * 7).astype(int)) == list(range(7))

    def test_maximin_is_best_candidate(self):
        X = maximin_lhc(8, 2, seed=4, n_candidates=30)
        rng = np.random.default_rng(4)
        dists = [min_distance(latin_hypercube(8, 2, rng)) for _ in range(30)]
        assert min_distance(X) == pytest.approx(max(dists))

    def test_deterministic(self):
        np.testing.assert_array_equal(maximin_lhc(6, 3, seed=[1, 2]), maximin_lhc(6, 3, seed=[1, 2]))

    def test_too_small(self):
        with pytest.raises(ValueError):
            maximin_lhc(1, 2)


class TestInitialDesigns:
    def test_sizes_and_cost(self):
        problem = two_level_2d()
        d = initial_designs(problem, (8, 4), seed=0, n_starts=3)
        assert isinstance(d, InitialDesign)
        assert d.sizes == (8, 4)
        assert d.setup_cost == 8 * 1.0 + 4 * 9.0
        np.testing.assert_allclose(d.y_low[1], problem.evaluate(1, d.X[1]))
        np.testing.assert_allclose(d.y[1], problem.evaluate(2, d.X[1]))

    def test_upper_picks_distinct_and_in_box(self):
        d = initial_designs(two_level_2d(), (8, 4), seed=3, n_starts=3)
        assert len(np.unique(d.X[1], axis=0)) == 4
        assert np.all((d.X[1] >= 0) & (d.X[1] <= 1))

    def test_minimal_sizes(self):
        d = initial_designs(two_level_2d(), (2, 1), seed=0, n_starts=2)
        assert d.sizes == (2, 1)

    @pytest.mark.parametrize("sizes", [(1, 1), (8, 0), (8,), (8, 4, 2)])
    def test_rejects(self, sizes):
        with pytest.raises(ValueError):
            initial_designs(two_level_2d(), sizes)


class TestNrmse:
    def test_perfect(self):
        assert nrmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_known_value(self):
        # errors (1, 0), truth range 2
        assert nrmse([1.0, 2.0], [0.0, 2.0]) == pytest.approx(np.sqrt(0.5) / 2)

    def test_scale_invariant(self, rng):
        t, p = rng.random(20), rng.random(20)
        assert nrmse(5 * p + 3, 5 * t + 3) == pytest.approx(nrmse(p, t))

    @pytest.mark.parametrize("p, t", [([1.0], [1.0]), ([1.0, 2.0], [3.0, 3.0]), ([1.0, 2.0], [1.0, 2.0, 3.0])])
    def test_rejects(self, p, t):
        with pytest.raises(ValueError):
            nrmse(p, t)


class TestGrid:
    def test_default_resolution(self):
        G = uniform_grid(2)
        assert G.shape == (10000, 2)
        assert G.min() == 0.0 and G.max() == 1.0

    def test_capped(self):
        assert len(uniform_grid(5)) <= 20000
        assert uniform_grid(3, 4).shape == (64, 3)


class TestProblems:
    def test_two_level_values(self):
        p = two_level_2d()
        assert p.evaluate(1, [[0.0, 0.0]])[0] == pytest.approx(-np.sqrt(2))
        assert p.evaluate(2, [[0.5, 0.5]])[0] == pytest.approx(-0.41421356, abs=1e-8)
        assert p.costs == (1.0, 8.0)
        np.testing.assert_array_equal(p.truth([[0.2, 0.3]]), p.evaluate(2, [[0.2, 0.3]]))

    def test_registry_and_costs(self):
        p = get_problem("two-level-2d", costs=(1, 32))
        assert p.costs == (1.0, 32.0)
        with pytest.raises(KeyError):
            get_problem("nope")

    def test_rejects_decreasing_costs(self):
        with pytest.raises(ValueError):
            get_problem("two-level-2d", costs=(8, 1))

    def test_inline_problem(self):
        p = problem_from_spec({"name": "lin", "dim": 1, "levels": ["x1", "2*x1 + sin(pi*x1)"],
                               "costs": [1, 4]})
        assert isinstance(p, TestProblem)
        np.testing.assert_allclose(p.evaluate(2, [[0.5]]), [2.0])

    def test_constant_expression_broadcasts(self):
        f = compile_expression("3", 2)
        np.testing.assert_array_equal(f(np.zeros((4, 2))), np.full(4, 3.0))

    @pytest.mark.parametrize("expr", ["__import__('os')", "x1.__class__", "x3", "open('f')",
                                      "[x1]", "'a'", "x1 if x2 else 0"])
    def test_expression_safety(self, expr):
        with pytest.raises(ValueError):
            compile_expression(expr, 2)
