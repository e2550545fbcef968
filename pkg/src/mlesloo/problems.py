"""Closed-form multi-level test problems on the unit hypercube."""

from __future__ import annotations

import ast
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TestProblem:
    """A hierarchy of simulators ``levels[0]`` (cheapest) to ``levels[-1]`` (target).

    Each level function maps an ``(n, p)`` array (or a single ``(p,)`` point)
    to outputs of shape ``(n,)`` (or a float).
    """

    __test__ = False  # not a pytest class

    name: str
    dim: int
    levels: tuple
    costs: tuple

    def __post_init__(self):
        if len(self.levels) != len(self.costs):
            raise ValueError("need one cost per level")
        if any(b < a for a, b in zip(self.costs, self.costs[1:])) or self.costs[0] <= 0:
            raise ValueError("costs must be positive and non-decreasing")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def evaluate(self, level: int, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        out = np.asarray(self.levels[level - 1](np.atleast_2d(X)), dtype=float)
        return float(out[0]) if single else out

    def truth(self, X) -> np.ndarray:
        return self.evaluate(self.n_levels, X)

    def simulators(self) -> list:
        return [lambda x, l=l: self.evaluate(l, x) for l in range(1, self.n_levels + 1)]


def _two_level_low(X):
    x1, x2 = X[:, 0], X[:, 1]
    return x2 + x1 ** 2 + x2 ** 2 - np.sqrt(2.0)


def _two_level_high(X):
    x1, x2 = X[:, 0], X[:, 1]
    return _two_level_low(X) + np.sin(2.0 * np.pi * x1) + np.sin(4.0 * np.pi * x1 * x2)


def two_level_2d(costs=(1.0, 8.0)) -> TestProblem:
    """Two-level 2-D toy problem: a smooth quadratic plus sinusoidal corrections."""
    return TestProblem("two-level-2d", 2, (_two_level_low, _two_level_high), tuple(costs))


# -- expression-defined problems -------------------------------------------

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh,
}
_CONSTS = {"pi": np.pi, "e": np.e}
_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
            ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


def compile_expression(expr: str, dim: int):
    """Compile an arithmetic expression in ``x1..xp`` into a vectorized function.

    Only numeric constants, ``+ - * / **``, ``pi``, ``e`` and the functions
    ``sin cos tan exp log sqrt abs tanh`` are accepted.
    """
    tree = ast.parse(expr, mode="eval")
    names = {f"x{d + 1}" for d in range(dim)} | set(_FUNCS) | set(_CONSTS)
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ValueError(f"unsupported syntax {type(node).__name__} in {expr!r}")
        if isinstance(node, ast.Name) and node.id not in names:
            raise ValueError(f"unknown name {node.id!r} in {expr!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ValueError(f"unsupported call in {expr!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ValueError(f"non-numeric constant in {expr!r}")
    code = compile(tree, "<problem>", "eval")

    def f(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        env = {"__builtins__": {}, **_FUNCS, **_CONSTS}
        env.update({f"x{d + 1}": X[:, d] for d in range(dim)})
        return np.broadcast_to(np.asarray(eval(code, env), dtype=float), (X.shape[0],)).copy()

    return f


def problem_from_spec(spec: dict) -> TestProblem:
    """Build a problem from ``{"name", "dim", "levels": [expr, ...], "costs": [...]}``."""
    dim = int(spec["dim"])
    levels = tuple(compile_expression(e, dim) for e in spec["levels"])
    costs = tuple(float(c) for c in spec.get("costs", range(1, len(levels) + 1)))
    return TestProblem(str(spec.get("name", "custom")), dim, levels, costs)


def problem_registry() -> dict:
    return {"two-level-2d": two_level_2d()}


def get_problem(name_or_spec, costs=None) -> TestProblem:
    if isinstance(name_or_spec, dict):
        problem = problem_from_spec(name_or_spec)
    else:
        registry = problem_registry()
        if name_or_spec not in registry:
            raise KeyError(f"unknown problem {name_or_spec!r}; known: {sorted(registry)}")
        problem = registry[name_or_spec]
    if costs is not None:
        problem = TestProblem(problem.name, problem.dim, problem.levels, tuple(float(c) for c in costs))
    return problem
