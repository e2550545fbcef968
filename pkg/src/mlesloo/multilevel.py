"""Autoregressive multi-level Gaussian process emulator.

Level 1 is a GP on the cheapest simulator's outputs. Each level ``l > 1`` is a
GP on the discrepancy ``y_l - rho_{l-1} * y_{l-1}`` evaluated at that level's
own (non-nested) design. The top-level prediction is the weighted sum of the
independent per-level GPs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import DEFAULT_NUGGET, GaussianProcess, KernelSpec, PosteriorSummary, fit_gp

RHO_MODES = ("fixed", "estimated")


def level_weights(rho) -> np.ndarray:
    """Products of correlation parameters weighting each level in the top level.

    ``P_1 = prod(rho)``, ``P_l = prod(rho[l-1:])`` for middle levels and
    ``P_L = 1``.
    """
    rho = np.asarray(rho, dtype=float).ravel()
    if rho.size == 0:
        raise ValueError("rho must contain at least one value")
    L = rho.size + 1
    P = np.ones(L)
    for l in range(L - 2, -1, -1):
        P[l] = rho[l] * P[l + 1]
    return P


def discrepancy_targets(y_hi, y_lo, rho_prev: float) -> np.ndarray:
    y_hi = np.asarray(y_hi, dtype=float)
    y_lo = np.asarray(y_lo, dtype=float)
    if y_hi.shape != y_lo.shape:
        raise ValueError("y_hi and y_lo must have the same length")
    return y_hi - rho_prev * y_lo


def _rho_slope(y_hi, y_lo) -> float:
    denom = float(y_lo @ y_lo)
    if denom <= 0.0:
        raise ValueError("cannot estimate rho: lower-level outputs are all zero")
    return float(y_hi @ y_lo) / denom


@dataclass(frozen=True)
class LevelData:
    """Training data for one level.

    ``y_low`` holds the level ``l-1`` outputs at this level's inputs and is
    ``None`` for level 1.
    """

    level: int
    X: np.ndarray
    y: np.ndarray
    y_low: np.ndarray | None
    y_target: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @classmethod
    def build(cls, level, X, y, y_low=None, rho_prev=None) -> "LevelData":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError(f"level {level}: X and y have different lengths")
        if level == 1:
            if y_low is not None:
                raise ValueError("level 1 has no lower level")
            return cls(1, X, y, None, y.copy())
        if y_low is None:
            raise ValueError(f"level {level} needs lower-level outputs")
        y_low = np.asarray(y_low, dtype=float).ravel()
        return cls(level, X, y, y_low, discrepancy_targets(y, y_low, rho_prev))


class MultiLevelEmulator:
    """Immutable snapshot of an L-level autoregressive emulator.

    Parameters
    ----------
    levels : list of LevelData
    gps : list of GaussianProcess
        ``gps[l - 1]`` is trained on ``levels[l - 1].X`` and ``y_target``.
    rho : array_like, length L - 1
    costs : array_like, length L
        Positive, non-decreasing per-level simulator costs.
    rho_mode : {"fixed", "estimated"}
    mean_modes : sequence of str
        Mean mode for each level's GP.
    nugget : float
    seed : int
        Root seed for hyperparameter refits.
    n_starts : int

    Notes
    -----
    A single-level emulator (``L = 1``) is allowed; it is the plain GP used by
    the single-level ES-LOO path.
    """

    def __init__(self, levels, gps, rho, costs, *, rho_mode="fixed", mean_modes=None,
                 nugget=DEFAULT_NUGGET, seed=0, n_starts=10):
        L = len(levels)
        rho = np.asarray(rho, dtype=float).ravel()
        costs = np.asarray(costs, dtype=float).ravel()
        if L < 1 or len(gps) != L:
            raise ValueError("need one GP per level")
        if rho.size != L - 1:
            raise ValueError(f"need {L - 1} rho values for {L} levels")
        if costs.size != L:
            raise ValueError(f"need {L} costs for {L} levels")
        if np.any(costs <= 0) or np.any(np.diff(costs) < 0):
            raise ValueError("costs must be positive and non-decreasing")
        if rho_mode not in RHO_MODES:
            raise ValueError(f"rho_mode must be one of {RHO_MODES}")
        dims = {ld.X.shape[1] for ld in levels}
        if len(dims) != 1:
            raise ValueError("all levels must share the input dimension")
        self.levels = list(levels)
        self.gps = list(gps)
        self.rho = rho
        self.costs = costs
        self.rho_mode = rho_mode
        self.mean_modes = tuple(mean_modes) if mean_modes is not None else default_mean_modes(L)
        self.nugget = nugget
        self.seed = seed
        self.n_starts = n_starts

    @classmethod
    def fit(cls, X_levels, y_levels, y_low_levels=None, rho=None, costs=None, *,
            rho_mode="fixed", mean_modes=None, nugget=DEFAULT_NUGGET, seed=0, n_starts=10):
        """Build the per-level training sets and fit every level's GP.

        ``y_low_levels[l - 1]`` are the level ``l-1`` outputs at ``X_levels[l - 1]``
        (ignored for level 1). With ``rho_mode="estimated"`` the given ``rho``
        values are replaced by least-squares slopes.
        """
        L = len(X_levels)
        if y_low_levels is None:
            y_low_levels = [None] * L
        rho = np.ones(L - 1) if rho is None else np.asarray(rho, dtype=float).ravel()
        if rho.size != L - 1:
            raise ValueError(f"need {L - 1} rho values for {L} levels")
        if costs is None:
            raise ValueError("costs are required")
        mean_modes = tuple(mean_modes) if mean_modes is not None else default_mean_modes(L)
        rho = rho.copy()
        levels = []
        for l in range(1, L + 1):
            y_low = None if l == 1 else np.asarray(y_low_levels[l - 1], dtype=float)
            if l > 1 and rho_mode == "estimated":
                rho[l - 2] = _rho_slope(np.asarray(y_levels[l - 1], dtype=float).ravel(), y_low.ravel())
            levels.append(LevelData.build(l, X_levels[l - 1], y_levels[l - 1], y_low,
                                          None if l == 1 else rho[l - 2]))
        gps = [_fit_level(ld, mean_modes[ld.level - 1], nugget, seed, n_starts) for ld in levels]
        return cls(levels, gps, rho, costs, rho_mode=rho_mode, mean_modes=mean_modes,
                   nugget=nugget, seed=seed, n_starts=n_starts)

    # -- accessors ----------------------------------------------------------
    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def dim(self) -> int:
        return self.levels[0].X.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.ones(1) if self.n_levels == 1 else level_weights(self.rho)

    def level(self, l: int) -> LevelData:
        self._check_level(l)
        return self.levels[l - 1]

    def gp(self, l: int) -> GaussianProcess:
        self._check_level(l)
        return self.gps[l - 1]

    def _check_level(self, l):
        if not 1 <= l <= self.n_levels:
            raise ValueError(f"level must be in 1..{self.n_levels}, got {l}")

    # -- prediction ---------------------------------------------------------
    def predict(self, X, return_var: bool = True):
        """Top-level predictive mean (and variance) at the rows of ``X``."""
        P = self.weights
        X = np.atleast_2d(np.asarray(X, dtype=float))
        mean = np.zeros(X.shape[0])
        var = np.zeros(X.shape[0])
        for w, gp in zip(P, self.gps):
            if return_var:
                m, v = gp.predict(X)
                var += w * w * v
            else:
                m = gp.predict(X, return_var=False)
            mean += w * m
        return (mean, var) if return_var else mean

    # -- updates ------------------------------------------------------------
    def add_run(self, x, level: int, f_level: float, f_below: float | None = None,
                refit: bool = True) -> "MultiLevelEmulator":
        """Return a new emulator with one run appended to ``level``'s design.

        ``f_below`` is used only to form the discrepancy target; it is never
        added to the lower level's training data.
        """
        return self.add_runs([(x, level, f_level, f_below)], refit=refit)

    def add_runs(self, runs, refit: bool = True) -> "MultiLevelEmulator":
        """Append several ``(x, level, f_level, f_below)`` runs, refitting each
        touched level once."""
        levels = list(self.levels)
        touched = set()
        for x, l, f_level, f_below in runs:
            self._check_level(l)
            x = np.asarray(x, dtype=float).reshape(1, -1)
            if x.shape[1] != self.dim:
                raise ValueError(f"point has dimension {x.shape[1]}, expected {self.dim}")
            if not np.isfinite(f_level) or (f_below is not None and not np.isfinite(f_below)):
                raise ValueError("simulator outputs must be finite")
            ld = levels[l - 1]
            if np.any(np.all(ld.X == x, axis=1)):
                raise ValueError(f"point {x.ravel().tolist()} already in the level-{l} design")
            X = np.vstack([ld.X, x])
            y = np.append(ld.y, f_level)
            if l == 1:
                if f_below is not None:
                    raise ValueError("level 1 takes no lower-level output")
                levels[0] = LevelData.build(1, X, y)
            else:
                if f_below is None:
                    raise ValueError(f"level {l} needs the level {l - 1} output at x")
                y_low = np.append(ld.y_low, f_below)
                levels[l - 1] = LevelData(l, X, y, y_low, np.empty(0))
            touched.add(l)

        rho = self.rho.copy()
        for l in sorted(touched):
            if l == 1:
                continue
            ld = levels[l - 1]
            if self.rho_mode == "estimated":
                rho[l - 2] = _rho_slope(ld.y, ld.y_low)
            levels[l - 1] = LevelData.build(l, ld.X, ld.y, ld.y_low, rho[l - 2])

        gps = list(self.gps)
        for l in sorted(touched):
            ld = levels[l - 1]
            if refit:
                gps[l - 1] = _fit_level(ld, self.mean_modes[l - 1], self.nugget, self.seed, self.n_starts)
            else:
                gps[l - 1] = gps[l - 1].with_data(ld.X, ld.y_target)
        return MultiLevelEmulator(levels, gps, rho, self.costs, rho_mode=self.rho_mode,
                                  mean_modes=self.mean_modes, nugget=self.nugget,
                                  seed=self.seed, n_starts=self.n_starts)

    def with_costs(self, costs) -> "MultiLevelEmulator":
        return MultiLevelEmulator(self.levels, self.gps, self.rho, costs, rho_mode=self.rho_mode,
                                  mean_modes=self.mean_modes, nugget=self.nugget,
                                  seed=self.seed, n_starts=self.n_starts)

    def hyperparameters(self) -> list[dict]:
        return [gp.hyperparameters() for gp in self.gps]


def default_mean_modes(L: int) -> tuple[str, ...]:
    return ("constant",) + ("zero",) * (L - 1)


def _fit_level(ld: LevelData, mean_mode, nugget, seed, n_starts) -> GaussianProcess:
    if ld.n < 2:
        # nothing to optimize; unit-scale default kernel
        scale = max(float(ld.y_target @ ld.y_target), 1.0)
        return GaussianProcess(ld.X, ld.y_target, KernelSpec(np.full(ld.X.shape[1], 0.3), scale),
                               mean_mode, nugget)
    # seed depends on the level and its size so refits are reproducible
    return fit_gp(ld.X, ld.y_target, mean_mode=mean_mode, nugget=nugget,
                  seed=[seed, ld.level, ld.n], n_starts=n_starts)


def ml_predict(em: MultiLevelEmulator, x) -> PosteriorSummary:
    m, v = em.predict(np.asarray(x, dtype=float).reshape(1, em.dim))
    return PosteriorSummary(float(m[0]), float(v[0]))


def add_run(em: MultiLevelEmulator, x, level, f_level, f_below=None) -> MultiLevelEmulator:
    return em.add_run(x, level, f_level, f_below)


def estimate_rho(em: MultiLevelEmulator, level: int) -> float:
    """No-intercept least-squares slope of level outputs on the level below."""
    if not 2 <= level <= em.n_levels:
        raise ValueError(f"level must be in 2..{em.n_levels}")
    ld = em.level(level)
    if ld.n < 2:
        raise ValueError("need at least two points to estimate rho")
    return _rho_slope(ld.y, ld.y_low)
