"""Squared-exponential Gaussian process regression.

Provides kernel evaluation, marginal-likelihood fitting, posterior prediction
and closed-form leave-one-out predictive distributions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, lapack, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

DEFAULT_NUGGET = 1e-8
MEAN_MODES = ("zero", "constant")

_LOG_2PI = np.log(2.0 * np.pi)


class SingularCovarianceError(np.linalg.LinAlgError):
    """Covariance matrix is not positive definite even after adding the nugget."""


@dataclass(frozen=True)
class KernelSpec:
    """Squared-exponential kernel with one lengthscale per input dimension.

    Parameters
    ----------
    lengthscales : array_like
        Positive lengthscale per input dimension.
    variance : float
        Process variance.
    lengthscale_lower_bounds : array_like, optional
        Per-dimension floor on the lengthscales; 0 means unbounded.
    """

    lengthscales: np.ndarray
    variance: float
    lengthscale_lower_bounds: np.ndarray | None = None
    family: str = "squared-exponential"

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        lb = self.lengthscale_lower_bounds
        lb = np.zeros_like(ls) if lb is None else np.broadcast_to(np.asarray(lb, dtype=float), ls.shape).copy()
        object.__setattr__(self, "lengthscale_lower_bounds", lb)
        object.__setattr__(self, "variance", float(self.variance))
        if self.family != "squared-exponential":
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if np.any(ls <= 0) or not np.all(np.isfinite(ls)):
            raise ValueError("lengthscales must be positive and finite")
        if np.any(lb < 0):
            raise ValueError("lengthscale lower bounds must be nonnegative")
        # small slack for optimizer round-off at the bound
        if np.any(ls < lb * (1.0 - 1e-12)):
            raise ValueError("lengthscales violate their lower bounds")
        if not self.variance > 0:
            raise ValueError("kernel variance must be positive")

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def correlation(self, A, B) -> np.ndarray:
        """Correlation matrix between the rows of ``A`` and ``B``."""
        A = _as_points(A, self.dim)
        B = _as_points(B, self.dim)
        sq = cdist(A / self.lengthscales, B / self.lengthscales, "sqeuclidean")
        return np.exp(-0.5 * sq)

    def __call__(self, A, B) -> np.ndarray:
        return self.variance * self.correlation(A, B)


def kernel_eval(spec: KernelSpec, a, b) -> float:
    """Covariance between two single points."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != (spec.dim,) or b.shape != (spec.dim,):
        raise ValueError(f"points must have dimension {spec.dim}")
    return float(spec.variance * np.exp(-0.5 * np.sum(((a - b) / spec.lengthscales) ** 2)))


@dataclass(frozen=True)
class PosteriorSummary:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")


def _as_points(X, dim: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if dim is None or X.size == dim else X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError("points must be a 2-D array (n, p)")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"points have dimension {X.shape[1]}, expected {dim}")
    return X


def has_duplicate_rows(X: np.ndarray) -> bool:
    return np.unique(X, axis=0).shape[0] != X.shape[0]


class GaussianProcess:
    """A fitted Gaussian process with a cached Cholesky factorization.

    The training covariance is ``K + nugget * I``. Instances are treated as
    immutable; use :meth:`with_data` to condition the same hyperparameters on
    different data.

    Parameters
    ----------
    X : array_like, shape (n, p)
        Training inputs in the unit hypercube.
    y : array_like, shape (n,)
        Training targets.
    kernel : KernelSpec
    mean_mode : {"zero", "constant"}
        ``"constant"`` estimates the constant mean by generalized least
        squares unless ``mean_value`` is given.
    nugget : float
    mean_value : float, optional
        Fixed constant mean, only used with ``mean_mode="constant"``.
    """

    def __init__(self, X, y, kernel: KernelSpec, mean_mode: str = "constant",
                 nugget: float = DEFAULT_NUGGET, mean_value: float | None = None):
        X = _as_points(X, kernel.dim)
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] < 1:
            raise ValueError("need at least one training point")
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y have different lengths")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
            raise ValueError("training data must be finite")
        if has_duplicate_rows(X):
            raise ValueError("duplicate rows in training inputs")
        if mean_mode not in MEAN_MODES:
            raise ValueError(f"mean_mode must be one of {MEAN_MODES}")
        if nugget < 0:
            raise ValueError("nugget must be nonnegative")

        self.X = X
        self.y = y
        self.kernel = kernel
        self.mean_mode = mean_mode
        self.nugget = float(nugget)

        K = kernel(X, X) + self.nugget * np.eye(X.shape[0])
        try:
            self.chol = np.linalg.cholesky(K)
        except np.linalg.LinAlgError as exc:
            raise SingularCovarianceError(
                "training covariance is singular; the design may be degenerate") from exc

        if mean_mode == "zero":
            self.mean_value = 0.0
        elif mean_value is not None:
            self.mean_value = float(mean_value)
        else:
            ones = cho_solve((self.chol, True), np.ones_like(y))
            self.mean_value = float(ones @ y / ones.sum())

        self.alpha = cho_solve((self.chol, True), y - self.mean_value)
        self._alpha_zero = None
        self._K_inv = None

    # -- basic properties -------------------------------------------------
    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def K_inv(self) -> np.ndarray:
        if self._K_inv is None:
            self._K_inv = cho_solve((self.chol, True), np.eye(self.n))
        return self._K_inv

    def hyperparameters(self) -> dict:
        return {
            "lengthscales": self.kernel.lengthscales.tolist(),
            "variance": self.kernel.variance,
            "mean": self.mean_value,
        }

    def with_data(self, X, y) -> "GaussianProcess":
        """Same hyperparameters (kernel, nugget, constant mean) on new data."""
        mean_value = self.mean_value if self.mean_mode == "constant" else None
        return GaussianProcess(X, y, self.kernel, self.mean_mode, self.nugget, mean_value)

    def log_marginal_likelihood(self) -> float:
        r = self.y - self.mean_value
        return float(-0.5 * r @ self.alpha - np.log(np.diag(self.chol)).sum() - 0.5 * self.n * _LOG_2PI)

    # -- prediction ---------------------------------------------------------
    def _variance(self, Xq, Kq):
        v = solve_triangular(self.chol, Kq.T, lower=True)
        var = self.kernel.variance - np.einsum("ij,ij->j", v, v)
        return np.maximum(var, 0.0)

    def predict(self, Xq, return_var: bool = True):
        """Posterior mean (and variance) at the rows of ``Xq``.

        The variance is that of the latent function, clamped at zero.
        """
        Xq = _as_points(Xq, self.dim)
        Kq = self.kernel(Xq, self.X)
        mean = self.mean_value + Kq @ self.alpha
        if not return_var:
            return mean
        return mean, self._variance(Xq, Kq)

    def predict_zero_mean(self, Xq, return_var: bool = True):
        """Posterior of the same GP with its prior mean forced to zero.

        Mean is ``k(x, X) K^{-1} y``; the variance does not depend on the mean.
        """
        Xq = _as_points(Xq, self.dim)
        if self._alpha_zero is None:
            self._alpha_zero = cho_solve((self.chol, True), self.y)
        Kq = self.kernel(Xq, self.X)
        mean = Kq @ self._alpha_zero
        if not return_var:
            return mean
        return mean, self._variance(Xq, Kq)

    def posterior(self, x) -> PosteriorSummary:
        m, v = self.predict(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, self.dim))
        return PosteriorSummary(float(m[0]), float(v[0]))

    def zero_mean_error_mean(self, x) -> PosteriorSummary:
        m, v = self.predict_zero_mean(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, self.dim))
        return PosteriorSummary(float(m[0]), float(v[0]))

    def loo(self):
        """Closed-form leave-one-out means and variances at the training inputs.

        Hyperparameters, including any constant mean, are held fixed. The
        variance removes the nugget so it matches the latent posterior of a
        refitted GP.
        """
        if self.n < 2:
            raise ValueError("leave-one-out needs at least two training points")
        d = np.diag(self.K_inv)
        mean = self.y - self.alpha / d
        var = np.maximum(1.0 / d - self.nugget, 0.0)
        return mean, var

    def loo_predictions(self) -> list[PosteriorSummary]:
        mean, var = self.loo()
        return [PosteriorSummary(float(m), float(v)) for m, v in zip(mean, var)]


def zero_mean_error_mean(gp: GaussianProcess, x) -> PosteriorSummary:
    return gp.zero_mean_error_mean(x)


def posterior(gp: GaussianProcess, x) -> PosteriorSummary:
    return gp.posterior(x)


def loo_predictions(gp: GaussianProcess) -> list[PosteriorSummary]:
    return gp.loo_predictions()


# -- hyperparameter fitting -------------------------------------------------

@dataclass
class _Objective:
    """Negative log marginal likelihood over (log lengthscales, log variance)."""

    X: np.ndarray
    y: np.ndarray
    mean_mode: str
    nugget: float
    sqdiff: np.ndarray = field(init=False)

    def __post_init__(self):
        n, p = self.X.shape
        diff = self.X[:, None, :] - self.X[None, :, :]
        self.sqdiff = np.moveaxis(diff ** 2, 2, 0).reshape(p, n * n)

    def __call__(self, theta):
        n, p = self.X.shape
        ls2 = np.exp(2.0 * theta[:p])
        var = np.exp(theta[p])
        R = var * np.exp(-0.5 * ((1.0 / ls2) @ self.sqdiff)).reshape(n, n)
        K = R.copy()
        K.flat[::n + 1] += self.nugget
        L, info = lapack.dpotrf(K, lower=1, clean=1)
        if info != 0:
            return 1e25, np.zeros_like(theta)
        K_inv, info = lapack.dpotri(L, lower=1)
        K_inv = np.tril(K_inv)
        K_inv += np.tril(K_inv, -1).T
        if self.mean_mode == "constant":
            ones = K_inv.sum(axis=1)
            mu = ones @ self.y / ones.sum()
        else:
            mu = 0.0
        r = self.y - mu
        alpha = K_inv @ r
        nll = 0.5 * r @ alpha + np.log(np.diagonal(L)).sum() + 0.5 * n * _LOG_2PI
        # envelope theorem: the GLS mean is profiled out, so no extra term
        W = (np.outer(alpha, alpha) - K_inv) * R
        grad = np.empty_like(theta)
        grad[:p] = -0.5 * (self.sqdiff @ W.ravel()) / ls2
        grad[p] = -0.5 * W.sum()
        return float(nll), grad


def _data_scale(y: np.ndarray, mean_mode: str) -> float:
    centre = y.mean() if mean_mode == "constant" else 0.0
    return max(float(np.mean((y - centre) ** 2)), 1e-10)


def fit_gp(X, y, mean_mode: str = "constant", lengthscale_lower_bounds=None,
           nugget: float = DEFAULT_NUGGET, seed=0, n_starts: int = 10) -> GaussianProcess:
    """Fit a squared-exponential GP by maximizing the log marginal likelihood.

    A bounded multi-start L-BFGS-B search runs on log-lengthscales and
    log-variance; the best local optimum over all starts is kept. Starting
    points are drawn from ``numpy.random.default_rng(seed)`` so the result is
    deterministic given ``seed``.

    Parameters
    ----------
    X : array_like, shape (n, p)
    y : array_like, shape (n,)
    mean_mode : {"zero", "constant"}
    lengthscale_lower_bounds : float or array_like, optional
        Per-dimension lengthscale floor (0 = only the default 0.01 floor).
    nugget : float
    seed : int or sequence of int
    n_starts : int

    Returns
    -------
    GaussianProcess
    """
    X = np.asarray(X, dtype=float)
    X = _as_points(X.reshape(-1, 1) if X.ndim == 1 else X)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if n < 2:
        raise ValueError("fit_gp needs at least two points")
    if y.size != n:
        raise ValueError("X and y have different lengths")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    if has_duplicate_rows(X):
        raise ValueError("duplicate rows in training inputs")
    if mean_mode not in MEAN_MODES:
        raise ValueError(f"mean_mode must be one of {MEAN_MODES}")
    if nugget < 0:
        raise ValueError("nugget must be nonnegative")

    lb = np.zeros(p) if lengthscale_lower_bounds is None else np.broadcast_to(
        np.asarray(lengthscale_lower_bounds, dtype=float), (p,)).copy()
    log_var0 = np.log(_data_scale(y, mean_mode))
    lower = np.concatenate([np.log(np.maximum(lb, 0.01)), [log_var0 - 4.0]])
    upper = np.concatenate([np.full(p, np.log(10.0)), [log_var0 + 4.0]])
    upper = np.maximum(upper, lower)

    rng = np.random.default_rng(seed)
    starts = lower + rng.random((n_starts, p + 1)) * (upper - lower)
    # first start: moderate lengthscales, data variance
    starts[0, :p] = np.clip(np.log(0.3), lower[:p], upper[:p])
    starts[0, p] = log_var0

    objective = _Objective(X, y, mean_mode, nugget)
    best_theta, best_val = None, np.inf
    for theta0 in starts:
        f0, _ = objective(theta0)
        res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                       bounds=list(zip(lower, upper)), options={"maxiter": 200})
        theta, val = (res.x, res.fun) if res.fun <= f0 else (theta0, f0)
        if val < best_val:
            best_theta, best_val = theta, val
    if not np.isfinite(best_val) or best_val >= 1e25:
        raise SingularCovarianceError("no starting point gave a positive-definite covariance")

    theta = np.clip(best_theta, lower, upper)
    kernel = KernelSpec(np.maximum(np.exp(theta[:p]), lb), np.exp(theta[p]), lb)
    return GaussianProcess(X, y, kernel, mean_mode, nugget)
