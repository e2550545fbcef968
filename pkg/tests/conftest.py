import numpy as np
import pytest

from mlesloo.gp import GaussianProcess, KernelSpec
from mlesloo.multilevel import LevelData, MultiLevelEmulator

# filled by tests/test_acceptance.py, echoed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_design(rng, n, p, min_sep=0.02):
    """Uniform points with a minimum pairwise separation (keeps K well conditioned)."""
    pts = []
    while len(pts) < n:
        x = rng.random(p)
        if all(np.linalg.norm(x - q) >= min_sep for q in pts):
            pts.append(x)
    return np.array(pts)


def random_kernel(rng, p, ls_range=(0.1, 0.6), var_range=(0.2, 5.0)):
    ls = np.exp(rng.uniform(*np.log(ls_range), size=p))
    var = float(np.exp(rng.uniform(*np.log(var_range))))
    return KernelSpec(ls, var)


def random_gp(rng, n, p, mean_mode=None, **kernel_kw):
    X = random_design(rng, n, p)
    y = np.sin(3.0 * X.sum(axis=1)) + rng.normal(scale=0.3, size=n)
    mean_mode = mean_mode or ("constant" if rng.random() < 0.5 else "zero")
    return GaussianProcess(X, y, random_kernel(rng, p, **kernel_kw), mean_mode)


def random_emulator(rng, L, p, sizes=None, costs=None):
    """L-level emulator with fixed random kernels (no hyperparameter fitting)."""
    sizes = sizes or [int(rng.integers(4, 9)) for _ in range(L)]
    rho = rng.uniform(0.5, 1.5, size=L - 1)
    levels, gps = [], []
    for l in range(1, L + 1):
        X = random_design(rng, sizes[l - 1], p)
        y = np.cos(2.0 * X.sum(axis=1) + l) + 0.1 * l * rng.normal(size=len(X))
        y_low = None if l == 1 else np.sin(X.sum(axis=1)) + rng.normal(scale=0.1, size=len(X))
        ld = LevelData.build(l, X, y, y_low, None if l == 1 else rho[l - 2])
        levels.append(ld)
        gps.append(GaussianProcess(ld.X, ld.y_target, random_kernel(rng, p),
                                   "constant" if l == 1 else "zero"))
    costs = costs or [float(c) for c in np.cumsum(rng.uniform(1, 5, size=L))]
    return MultiLevelEmulator(levels, gps, rho, costs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
