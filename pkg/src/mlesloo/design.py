"""Initial designs: maximin Latin hypercubes and ES-LOO-seeded upper levels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .multilevel import MultiLevelEmulator
from .problems import TestProblem
from .sampler import SamplerConfig, batch_same_level, level_cost


def latin_hypercube(n: int, p: int, rng) -> np.ndarray:
    """One random LHC: each column hits each of ``n`` equal bins exactly once."""
    perms = np.argsort(rng.random((p, n)), axis=1).T
    return (perms + rng.random((n, p))) / n


def min_distance(X) -> float:
    return float(pdist(X).min()) if len(X) > 1 else np.inf


def maximin_lhc(n: int, p: int, seed=0, n_candidates: int = 100) -> np.ndarray:
    """Best of ``n_candidates`` random Latin hypercubes by minimum pairwise distance."""
    if n < 2:
        raise ValueError("maximin_lhc needs n >= 2")
    rng = np.random.default_rng(seed)
    best, best_d = None, -np.inf
    for _ in range(n_candidates):
        X = latin_hypercube(n, p, rng)
        d = min_distance(X)
        if d > best_d:
            best, best_d = X, d
    return best


@dataclass
class InitialDesign:
    X: list
    y: list
    y_low: list
    setup_cost: float

    @property
    def sizes(self) -> tuple:
        return tuple(x.shape[0] for x in self.X)


def initial_designs(problem: TestProblem, sizes, seed=0, *, n_starts=10) -> InitialDesign:
    """Level 1 from a maximin LHC; each upper level from single-level ES-LOO
    picks on the level below.

    The picks for level ``l`` come from a single-level GP on level ``l-1``'s
    data, selected one after another with the repulsion set growing but no new
    level ``l-1`` training runs. Level ``l-1`` is then evaluated at the picks
    only to form discrepancy targets.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != problem.n_levels:
        raise ValueError(f"need {problem.n_levels} initial sizes")
    if sizes[0] < 2:
        raise ValueError("level 1 needs at least 2 initial points")
    if any(s < 1 for s in sizes[1:]):
        raise ValueError("upper levels need at least 1 initial point")
    if any(s < 2 for s in sizes[1:-1]):
        raise ValueError("intermediate levels need at least 2 points to seed the level above")

    X1 = maximin_lhc(sizes[0], problem.dim, seed=[seed, 0])
    X, y, y_low = [X1], [problem.evaluate(1, X1)], [None]
    cost = problem.costs[0] * sizes[0]
    for l in range(2, problem.n_levels + 1):
        below = MultiLevelEmulator.fit([X[-1]], [y[-1]], costs=[problem.costs[l - 2]],
                                       mean_modes=["constant"], seed=seed, n_starts=n_starts)
        cfg = SamplerConfig(costs=(problem.costs[l - 2],), stopping="iterations", max_iterations=0,
                            batch_size=sizes[l - 1], batch_mode="same-level", exploration_interval=0)
        picks = np.array([p.x for p in batch_same_level(below, cfg, sizes[l - 1], seed=[seed, l])])
        X.append(picks)
        y.append(problem.evaluate(l, picks))
        y_low.append(problem.evaluate(l - 1, picks))
        cost += level_cost(problem.costs, l) * sizes[l - 1]
    return InitialDesign(X, y, y_low, float(cost))
