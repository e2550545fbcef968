"""Seeded experiments: repeated sampler runs, aggregation, sweeps and persistence."""

from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .design import initial_designs
from .metrics import nrmse, uniform_grid
from .multilevel import MultiLevelEmulator
from .problems import TestProblem, get_problem
from .sampler import RunLog, SamplerConfig, run
from .serialize import dumps, fmt_float, write_json

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one multi-seed experiment.

    ``problem`` is a registry name or an inline ``{"dim", "levels", "costs"}``
    mapping. ``costs`` overrides the problem's own costs when given.
    """

    problem: object = "two-level-2d"
    costs: tuple | None = None
    initial_sizes: tuple = (8, 4)
    rho_mode: str = "fixed"
    rho: tuple = (1.0,)
    stopping: str = "iterations"
    budget: float | None = None
    max_iterations: int | None = 30
    nrmse_target: float | None = None
    batch_size: int = 1
    batch_mode: str = "sequential"
    exploration_interval: int = 0
    seeds: tuple = tuple(range(10))
    grid_per_axis: int | None = None
    surface_mean_mode: str = "constant"
    log_targets: bool = False
    n_candidates_per_dim: int = 500
    n_refine: int = 5
    n_starts: int = 10

    def __post_init__(self):
        self.initial_sizes = tuple(int(s) for s in self.initial_sizes)
        self.rho = tuple(float(r) for r in self.rho)
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.costs is not None:
            self.costs = tuple(float(c) for c in self.costs)
        if not self.seeds:
            raise ValueError("seeds must not be empty")

    def resolve_problem(self) -> TestProblem:
        return get_problem(self.problem, self.costs)

    def sampler_config(self, seed: int, costs=None) -> SamplerConfig:
        return SamplerConfig(
            costs=tuple(costs if costs is not None else self.resolve_problem().costs),
            stopping=self.stopping, budget=self.budget, max_iterations=self.max_iterations,
            nrmse_target=self.nrmse_target, batch_size=self.batch_size, batch_mode=self.batch_mode,
            exploration_interval=self.exploration_interval, seed=seed, rho_mode=self.rho_mode,
            rho=self.rho, surface_mean_mode=self.surface_mean_mode, log_targets=self.log_targets,
            n_candidates_per_dim=self.n_candidates_per_dim, n_refine=self.n_refine)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["costs"] = list(self.resolve_problem().costs)
        return out


def build_initial_emulator(problem: TestProblem, cfg: ExperimentConfig, seed: int):
    """Fresh initial designs and the multi-level emulator fitted to them."""
    design = initial_designs(problem, cfg.initial_sizes, seed=seed, n_starts=cfg.n_starts)
    rho = cfg.rho if len(cfg.rho) == problem.n_levels - 1 else (1.0,) * (problem.n_levels - 1)
    em = MultiLevelEmulator.fit(design.X, design.y, design.y_low, rho=rho, costs=problem.costs,
                                rho_mode=cfg.rho_mode, seed=seed, n_starts=cfg.n_starts)
    return em, design


def run_seed(cfg: ExperimentConfig, seed: int) -> RunLog:
    problem = cfg.resolve_problem()
    em, _ = build_initial_emulator(problem, cfg, seed)
    grid = uniform_grid(problem.dim, cfg.grid_per_axis)
    return run(em, cfg.sampler_config(seed, problem.costs), problem.simulators(),
               truth=problem.truth, test_grid=grid)


def _map_seeds(fn, seeds, parallel: bool):
    if parallel:
        from joblib import Parallel, delayed
        return Parallel(n_jobs=-1)(delayed(fn)(s) for s in seeds)
    return [fn(s) for s in seeds]


def checkpoints_for(logs) -> np.ndarray:
    """Union of all recorded cumulative costs up to the smallest final cost."""
    stop = min(lg.cost_cum for lg in logs)
    pts = np.unique(np.concatenate([lg.curve()[0] for lg in logs]))
    return pts[pts <= stop + 1e-9]


def band(logs, checkpoints) -> dict:
    """Median and 5%/95% NRMSE quantiles across runs at each checkpoint."""
    values = np.array([[lg.nrmse_at(c) for c in checkpoints] for lg in logs])
    return {
        "cost": np.asarray(checkpoints, dtype=float),
        "median": np.median(values, axis=0),
        "q05": np.quantile(values, 0.05, axis=0),
        "q95": np.quantile(values, 0.95, axis=0),
    }


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    logs: dict
    n_levels: int
    curve: dict = field(default_factory=dict)

    @property
    def seeds(self) -> list:
        return list(self.logs)

    def level_counts(self) -> dict:
        return {s: lg.level_counts(self.n_levels) for s, lg in self.logs.items()}

    def initial_nrmse(self) -> dict:
        return {s: lg.records[0].nrmse for s, lg in self.logs.items()}

    def final_nrmse(self) -> dict:
        return {s: lg.records[-1].nrmse for s, lg in self.logs.items()}

    def summary(self) -> dict:
        counts = self.level_counts()
        return {
            "config": self.config.to_dict(),
            "seeds": self.seeds,
            "initial_nrmse": [self.initial_nrmse()[s] for s in self.seeds],
            "final_nrmse": [self.final_nrmse()[s] for s in self.seeds],
            "final_cost": [self.logs[s].cost_cum for s in self.seeds],
            "level_counts": [[counts[s][l] for l in range(1, self.n_levels + 1)] for s in self.seeds],
            "level_totals": [sum(counts[s][l] for s in self.seeds) for l in range(1, self.n_levels + 1)],
            "curve": {k: list(v) for k, v in self.curve.items()},
        }

    def save(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        for s, lg in self.logs.items():
            lg.to_csv(os.path.join(out_dir, f"runlog_{s}.csv"))
        write_json(os.path.join(out_dir, "summary.json"), self.summary())


def run_experiment(cfg: ExperimentConfig, parallel: bool = False) -> ExperimentResult:
    """Run every seed from fresh initial designs and aggregate NRMSE bands.

    Seeds are independent; with ``parallel`` they run under joblib and are
    gathered back in seed order.
    """
    problem = cfg.resolve_problem()
    logs = _map_seeds(lambda s: run_seed(cfg, s), cfg.seeds, parallel)
    logs = dict(zip(cfg.seeds, logs))
    curve = band(list(logs.values()), checkpoints_for(list(logs.values())))
    return ExperimentResult(cfg, logs, problem.n_levels, curve)


# -- sweeps and comparisons ---------------------------------------------------

def cost_ratio_sweep(cfg: ExperimentConfig, ratios, parallel: bool = False) -> list[dict]:
    """Two-level runs at costs ``(1, r)`` for each ratio ``r``.

    Each row holds the mean and 5%/95% quantiles of the per-level pick counts
    and of the final NRMSE across seeds.
    """
    ratios = [float(r) for r in ratios]
    if not ratios:
        raise ValueError("ratios must not be empty")
    rows = []
    for r in ratios:
        res = run_experiment(dataclasses.replace(cfg, costs=(1.0, r)), parallel=parallel)
        counts = res.level_counts()
        finals = np.array([res.final_nrmse()[s] for s in res.seeds])
        row = {"ratio": r}
        for l in range(1, res.n_levels + 1):
            c = np.array([counts[s][l] for s in res.seeds], dtype=float)
            row.update({f"level{l}_mean": c.mean(), f"level{l}_q05": np.quantile(c, 0.05),
                        f"level{l}_q95": np.quantile(c, 0.95)})
        row.update({"nrmse_mean": finals.mean(), "nrmse_median": np.median(finals),
                    "nrmse_q05": np.quantile(finals, 0.05), "nrmse_q95": np.quantile(finals, 0.95)})
        rows.append(row)
    return rows


def _single_level_log(problem: TestProblem, cfg: ExperimentConfig, seed: int, budget: float) -> RunLog:
    design = initial_designs(problem, cfg.initial_sizes, seed=seed, n_starts=cfg.n_starts)
    X, y = design.X[-1], design.y[-1]
    top = TestProblem(problem.name + "-top", problem.dim, (problem.levels[-1],), (problem.costs[-1],))
    em = MultiLevelEmulator.fit([X], [y], costs=top.costs, mean_modes=["constant"], seed=seed,
                                n_starts=cfg.n_starts)
    scfg = dataclasses.replace(cfg.sampler_config(seed, top.costs), stopping="budget", budget=budget,
                               batch_size=1, batch_mode="sequential", exploration_interval=0)
    grid = uniform_grid(problem.dim, cfg.grid_per_axis)
    return run(em, scfg, top.simulators(), truth=problem.truth, test_grid=grid)


def single_vs_multi_comparison(cfg: ExperimentConfig, budget: float = 100.0, parallel: bool = False,
                               n_checkpoints: int = 101, multi: ExperimentResult | None = None) -> dict:
    """NRMSE of single-level ES-LOO on the top level minus that of the multi-level run.

    Both arms start from the same seeded initial designs: the single-level arm
    uses the top-level design and outputs only, each new point costing
    ``C_L``. Positive differences favour the multi-level emulator. A finished
    sequential multi-level run to the same budget can be passed as ``multi``.
    """
    problem = cfg.resolve_problem()
    if multi is None:
        multi_cfg = dataclasses.replace(cfg, stopping="budget", budget=budget, max_iterations=None,
                                        batch_size=1, batch_mode="sequential")
        multi = run_experiment(multi_cfg, parallel=parallel)
    single = dict(zip(cfg.seeds, _map_seeds(lambda s: _single_level_log(problem, cfg, s, budget),
                                            cfg.seeds, parallel)))
    cp = np.linspace(0.0, budget, n_checkpoints)
    diff = np.array([[single[s].nrmse_at(c) - multi.logs[s].nrmse_at(c) for c in cp] for s in cfg.seeds])
    return {
        "cost": cp,
        "median_difference": np.median(diff, axis=0),
        "q05": np.quantile(diff, 0.05, axis=0),
        "q95": np.quantile(diff, 0.95, axis=0),
        "differences": diff,
        "multi": multi,
        "single": single,
    }


def batch_vs_sequential(cfg: ExperimentConfig, budget: float = 100.0, q: int = 5,
                        mode: str = "mixed", parallel: bool = False) -> dict:
    """Sequential and ``q``-point batch runs to the same budget from the same designs."""
    base = dataclasses.replace(cfg, stopping="budget", budget=budget, max_iterations=None)
    seq = run_experiment(dataclasses.replace(base, batch_size=1, batch_mode="sequential"), parallel)
    bat = run_experiment(dataclasses.replace(base, batch_size=q, batch_mode=mode), parallel)
    cp = checkpoints_for(list(seq.logs.values()) + list(bat.logs.values()))
    return {"sequential": seq, "batch": bat,
            "sequential_curve": band(list(seq.logs.values()), cp),
            "batch_curve": band(list(bat.logs.values()), cp)}


# -- persistence ---------------------------------------------------------------

def write_table(path, rows: list[dict]) -> None:
    """CSV with the union of keys in first-seen order; floats at 17 significant digits."""
    cols = list(dict.fromkeys(k for r in rows for k in r))
    lines = [",".join(cols)]
    for r in rows:
        cells = []
        for c in cols:
            v = r.get(c, "")
            cells.append(fmt_float(v) if isinstance(v, (float, np.floating)) else str(v))
        lines.append(",".join(cells))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def curve_rows(curve: dict) -> list[dict]:
    keys = list(curve)
    return [{k: float(curve[k][i]) for k in keys} for i in range(len(curve[keys[0]]))]


__all__ = [
    "ExperimentConfig", "ExperimentResult", "build_initial_emulator", "run_seed", "run_experiment",
    "cost_ratio_sweep", "single_vs_multi_comparison", "batch_vs_sequential", "band",
    "checkpoints_for", "dumps", "write_json", "write_table", "curve_rows", "nrmse",
]
