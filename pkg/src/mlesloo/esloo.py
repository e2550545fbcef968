"""Normalized expected-squared leave-one-out error and its acquisition.

For a chosen level, each of that level's design points is left out in turn;
the resulting error of the top-level emulator is Normal with mean ``M`` and
variance ``V``. The normalized ES-LOO value ``E[e^2] / sd[e^2]`` is modelled
over the input space by a second GP, and new points maximize its expected
improvement times a repulsion function (the PEI).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr
from scipy.stats import qmc

from .gp import GaussianProcess, fit_gp
from .multilevel import MultiLevelEmulator

#: Lower bound on the ES-LOO surface lengthscales: correlation 1e-8 at unit distance.
THETA_E = float(np.sqrt(-0.5 / np.log(1e-8)))

VARIANCE_FLOOR = 1e-12

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class ErrorDistribution:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")


def error_moments(em: MultiLevelEmulator, level: int):
    """Mean and variance of the top-level error at every design point of ``level``.

    Leave-one-out is applied to ``level``'s GP only; every other level
    contributes its zero-mean posterior at the left-out input.

    Returns
    -------
    M, V : ndarray, shape (n_level,)
    """
    P = em.weights
    X = em.level(level).X
    gp = em.gp(level)
    loo_mean, loo_var = gp.loo()
    M = P[level - 1] * (loo_mean - em.level(level).y_target)
    V = P[level - 1] ** 2 * loo_var
    for j in range(1, em.n_levels + 1):
        if j == level:
            continue
        e, s2 = em.gp(j).predict_zero_mean(X)
        M = M + P[j - 1] * e
        V = V + P[j - 1] ** 2 * s2
    return M, V


def _check_index(em, level, i):
    n = em.level(level).n
    if not 0 <= i < n:
        raise IndexError(f"design index {i} out of range for level {level} with {n} points")


def error_distribution_level1(em: MultiLevelEmulator, i: int) -> ErrorDistribution:
    """Top-level error distribution after leaving out level-1 design point ``i``."""
    _check_index(em, 1, i)
    M, V = error_moments(em, 1)
    return ErrorDistribution(float(M[i]), float(V[i]))


def error_distribution_levell(em: MultiLevelEmulator, level: int, i: int) -> ErrorDistribution:
    """Top-level error distribution after leaving out point ``i`` of discrepancy level ``level``."""
    if level < 2:
        raise ValueError("use error_distribution_level1 for level 1")
    _check_index(em, level, i)
    M, V = error_moments(em, level)
    return ErrorDistribution(float(M[i]), float(V[i]))


def esloo_value(M, V=None):
    """Normalized expected squared error ``(V + M^2) / sqrt(2 V^2 + 4 V M^2)``.

    Accepts an :class:`ErrorDistribution` or ``M, V`` (scalars or arrays).
    ``V`` is floored at 1e-12 so exact-interpolation points stay finite.
    """
    if isinstance(M, ErrorDistribution):
        M, V = M.mean, M.variance
    M = np.asarray(M, dtype=float)
    V = np.asarray(V, dtype=float)
    if np.any(V < 0):
        raise ValueError("variance must be nonnegative")
    if np.any((V == 0) & (M == 0)):
        raise ValueError("degenerate leave-one-out: zero mean and zero variance")
    V = np.maximum(V, VARIANCE_FLOOR)
    M2 = M * M
    out = (V + M2) / np.sqrt(2.0 * V * V + 4.0 * V * M2)
    return float(out) if out.ndim == 0 else out


def pseudo_points(design_points, p: int, extra=None) -> np.ndarray:
    """Corners of the unit hypercube plus the nearest-point projection onto each face.

    For face ``x_d = 0`` the design point with the smallest ``x_d`` is
    projected (ties to the lowest index); likewise the largest ``x_d`` for
    ``x_d = 1``. Duplicates are dropped, keeping first occurrence.
    """
    pts = [np.array(c, dtype=float) for c in itertools.product((0.0, 1.0), repeat=p)]
    X = np.asarray(design_points, dtype=float).reshape(-1, p) if design_points is not None else np.empty((0, p))
    if X.shape[0]:
        for d in range(p):
            for bound, idx in ((0.0, np.argmin(X[:, d])), (1.0, np.argmax(X[:, d]))):
                proj = X[idx].copy()
                proj[d] = bound
                pts.append(proj)
    if extra is not None:
        pts.extend(np.asarray(extra, dtype=float).reshape(-1, p))
    unique = dict.fromkeys(tuple(pt) for pt in pts)
    return np.array(list(unique), dtype=float).reshape(-1, p)


def improvement_from_moments(mean, sd, y_max) -> np.ndarray:
    """Expected improvement over ``y_max`` of Normal(mean, sd^2); 0 wherever ``sd == 0``."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    diff = mean - y_max
    ei = np.zeros(np.broadcast(mean, sd).shape)
    pos = np.broadcast_to(sd > 0, ei.shape)
    d, s = np.broadcast_to(diff, ei.shape)[pos], np.broadcast_to(sd, ei.shape)[pos]
    u = d / s
    ei[pos] = d * ndtr(u) + s * _INV_SQRT_2PI * np.exp(-0.5 * u * u)
    return np.maximum(ei, 0.0)


@dataclass(frozen=True)
class EsLooSurface:
    """GP model of the normalized ES-LOO values of one level, with its repulsion set.

    ``design_points`` are the points the repulsion acts on (the level's
    design plus any pending batch points); ``pseudo_points`` are never
    evaluated.
    """

    level: int
    gp: GaussianProcess
    y_max: float
    pseudo_points: np.ndarray
    design_points: np.ndarray
    targets: np.ndarray

    @property
    def dim(self) -> int:
        return self.gp.dim

    @property
    def repulsion_points(self) -> np.ndarray:
        return np.vstack([self.design_points, self.pseudo_points])

    def with_pending(self, x) -> "EsLooSurface":
        """Same EI surface with ``x`` added to the repulsion set."""
        x = np.asarray(x, dtype=float).reshape(1, self.dim)
        return replace(self, design_points=np.vstack([self.design_points, x]))

    def expected_improvement(self, X) -> np.ndarray:
        m, v = self.gp.predict(X)
        return improvement_from_moments(m, np.sqrt(v), self.y_max)

    def repulsion(self, X) -> np.ndarray:
        corr = self.gp.kernel.correlation(X, self.repulsion_points)
        return np.prod(1.0 - corr, axis=1)

    def pei(self, X) -> np.ndarray:
        return self.expected_improvement(X) * self.repulsion(X)


def build_surface(em: MultiLevelEmulator, level: int, seed=0, *, mean_mode="constant",
                  log_targets=False, extra_pseudo_points=None, n_starts=None) -> EsLooSurface:
    """Fit the ES-LOO surface of ``level`` with lengthscales floored at ``THETA_E``.

    Pseudo points are generated from the designs of all levels pooled.
    """
    ld = em.level(level)
    if ld.n < 2:
        raise ValueError(f"level {level} needs at least two design points")
    M, V = error_moments(em, level)
    targets = esloo_value(M, V)
    fit_targets = np.log(targets) if log_targets else targets
    gp = fit_gp(ld.X, fit_targets, mean_mode=mean_mode, lengthscale_lower_bounds=THETA_E,
                nugget=em.nugget, seed=_seed_list(seed, level),
                n_starts=em.n_starts if n_starts is None else n_starts)
    pooled = np.vstack([lvl.X for lvl in em.levels])
    return EsLooSurface(level, gp, float(fit_targets.max()),
                        pseudo_points(pooled, em.dim, extra_pseudo_points), ld.X.copy(), targets)


def expected_improvement(s: EsLooSurface, x) -> float:
    return float(s.expected_improvement(np.reshape(x, (1, s.dim)))[0])


def repulsion(s: EsLooSurface, x) -> float:
    return float(s.repulsion(np.reshape(x, (1, s.dim)))[0])


def pei(s: EsLooSurface, x) -> float:
    return float(s.pei(np.reshape(x, (1, s.dim)))[0])


def _seed_list(seed, *keys) -> list[int]:
    """Flatten a (possibly nested) seed and extra keys into a seed-sequence entropy list."""
    out = []
    for item in (seed, *keys):
        if isinstance(item, (list, tuple, np.ndarray)):
            out.extend(_seed_list(*item))
        else:
            out.append(int(item))
    return out


def maximize_pei(s: EsLooSurface, seed=0, n_candidates: int | None = None, n_refine: int = 5):
    """Maximize the PEI over the unit hypercube.

    PEI is evaluated on a scrambled Halton candidate set (``500 * p`` points by
    default); L-BFGS-B then refines the ``n_refine`` best candidates. Ties are
    broken by candidate order, so the result is deterministic given ``seed``.

    Returns
    -------
    x : ndarray, shape (p,)
    value : float
    """
    p = s.dim
    n_candidates = 500 * p if n_candidates is None else n_candidates
    rng = np.random.default_rng(_seed_list(seed, s.level, 7))
    cand = qmc.Halton(d=p, scramble=True, seed=rng).random(n_candidates)
    values = s.pei(cand)
    order = np.argsort(-values, kind="stable")
    best_x, best_val = cand[order[0]].copy(), float(values[order[0]])

    def neg_pei(x):
        return -float(s.pei(x.reshape(1, p))[0])

    for idx in order[:n_refine]:
        if values[idx] <= 0.0:
            break
        res = minimize(neg_pei, cand[idx], method="L-BFGS-B", bounds=[(0.0, 1.0)] * p,
                       options={"maxiter": 100})
        x = np.clip(res.x, 0.0, 1.0)
        val = -neg_pei(x)
        if val > best_val:
            best_x, best_val = x, val
    return best_x, best_val
