"""Cost-aware sequential and batch design for multi-level emulators.

Each iteration builds one ES-LOO surface per level, maximizes every level's
PEI, divides it by the cost of one run at that level (``C_1`` for level 1,
``C_{l-1} + C_l`` above since the level below is also needed), and runs the
simulator(s) at the overall winner.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .esloo import EsLooSurface, build_surface, maximize_pei
from .metrics import nrmse
from .multilevel import MultiLevelEmulator
from .serialize import dumps, fmt_float

log = logging.getLogger(__name__)

STOPPING_RULES = ("budget", "iterations", "nrmse")
BATCH_MODES = ("sequential", "same-level", "mixed")

# nrmse stopping needs some upper bound on the loop
_NRMSE_ITERATION_CAP = 1000


class SimulatorError(RuntimeError):
    """A simulator failed or returned a non-finite value."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


@dataclass
class SamplerConfig:
    """Settings for :func:`run`.

    Exactly one stopping rule is active: ``"budget"`` (total cost),
    ``"iterations"`` or ``"nrmse"`` (stop once the top-level NRMSE reaches
    ``nrmse_target``; needs a truth function).
    """

    costs: tuple
    stopping: str = "budget"
    budget: float | None = None
    max_iterations: int | None = None
    nrmse_target: float | None = None
    batch_size: int = 1
    batch_mode: str = "sequential"
    exploration_interval: int = 10
    seed: int = 0
    rho_mode: str = "fixed"
    rho: tuple = (1.0,)
    surface_mean_mode: str = "constant"
    log_targets: bool = False
    extra_pseudo_points: np.ndarray | None = None
    n_candidates_per_dim: int = 500
    n_refine: int = 5

    def __post_init__(self):
        self.costs = tuple(float(c) for c in self.costs)
        if self.stopping not in STOPPING_RULES:
            raise ValueError(f"stopping must be one of {STOPPING_RULES}")
        if self.stopping == "budget" and not (self.budget is not None and self.budget > 0):
            raise ValueError("budget stopping needs a positive budget")
        if self.stopping == "iterations" and not (self.max_iterations is not None and self.max_iterations >= 0):
            raise ValueError("iteration stopping needs max_iterations >= 0")
        if self.stopping == "nrmse" and self.nrmse_target is None:
            raise ValueError("nrmse stopping needs nrmse_target")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.batch_mode not in BATCH_MODES:
            raise ValueError(f"batch_mode must be one of {BATCH_MODES}")
        if self.batch_mode == "sequential" and self.batch_size != 1:
            raise ValueError("sequential mode needs batch_size 1")
        if self.exploration_interval < 0:
            raise ValueError("exploration_interval must be >= 0")


def level_cost(costs, level: int) -> float:
    """Cost charged for one run at ``level`` (two simulator calls above level 1)."""
    costs = tuple(costs)
    return float(costs[0]) if level == 1 else float(costs[level - 2] + costs[level - 1])


@dataclass(frozen=True)
class Proposal:
    x: np.ndarray
    level: int
    weighted_pei: float
    raw_pei: float
    cost_charged: float


@dataclass
class StepRecord:
    iteration: int
    level: int
    x: np.ndarray
    raw_pei: float
    weighted_pei: float
    cost_step: float
    cost_cum: float
    nrmse: float
    exploration: bool = False
    level_pei: tuple = ()
    hyperparameters: list = field(default_factory=list)


@dataclass
class RunLog:
    """Iteration-indexed record of a sampler run.

    ``records[0]`` is the setup row (iteration 0, level 0, no cost) holding the
    initial NRMSE when a truth function was given.
    """

    dim: int
    records: list = field(default_factory=list)
    emulator: MultiLevelEmulator | None = None

    @property
    def cost_cum(self) -> float:
        return self.records[-1].cost_cum if self.records else 0.0

    @property
    def steps(self) -> list:
        return [r for r in self.records if r.level > 0]

    def level_counts(self, n_levels: int) -> dict:
        counts = {l: 0 for l in range(1, n_levels + 1)}
        for r in self.steps:
            counts[r.level] += 1
        return counts

    def curve(self):
        """Cumulative cost and NRMSE after each record."""
        return (np.array([r.cost_cum for r in self.records]),
                np.array([r.nrmse for r in self.records]))

    def nrmse_at(self, cost: float) -> float:
        """NRMSE of the latest record whose cumulative cost is at most ``cost``."""
        costs, values = self.curve()
        idx = np.searchsorted(costs, cost + 1e-9, side="right") - 1
        return float(values[max(idx, 0)])

    def to_csv(self, path=None) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["iteration", "chosen_level", *[f"x{d + 1}" for d in range(self.dim)],
                         "raw_pei", "weighted_pei", "cost_step", "cost_cum", "nrmse",
                         "exploration_flag"])
        for r in self.records:
            xs = [fmt_float(v) for v in r.x] if r.level > 0 else [""] * self.dim
            writer.writerow([r.iteration, r.level, *xs, fmt_float(r.raw_pei),
                             fmt_float(r.weighted_pei), fmt_float(r.cost_step),
                             fmt_float(r.cost_cum), fmt_float(r.nrmse), int(r.exploration)])
        text = out.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        """Every record, including per-level proposal values and refit hyperparameters."""
        return {"dim": self.dim, "records": [
            {"iteration": r.iteration, "level": r.level, "x": [float(v) for v in r.x] if r.level > 0 else None,
             "raw_pei": r.raw_pei, "weighted_pei": r.weighted_pei, "cost_step": r.cost_step,
             "cost_cum": r.cost_cum, "nrmse": r.nrmse, "exploration": bool(r.exploration),
             "level_pei": list(r.level_pei), "hyperparameters": list(r.hyperparameters)}
            for r in self.records]}

    def to_json(self, path=None) -> str:
        text = dumps(self.to_dict())
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


# -- proposals ---------------------------------------------------------------

def _surfaces(em, cfg, seed, levels):
    return {
        l: build_surface(em, l, seed=[seed, 1], mean_mode=cfg.surface_mean_mode,
                         log_targets=cfg.log_targets, extra_pseudo_points=cfg.extra_pseudo_points)
        for l in levels
    }


def _best_on_surface(surface: EsLooSurface, cfg, seed):
    return maximize_pei(surface, seed=[seed, 2], n_candidates=cfg.n_candidates_per_dim * surface.dim,
                        n_refine=cfg.n_refine)


def _select(surfaces, cfg, seed, levels):
    """Cost-weighted argmax over ``levels``; ties go to the cheaper level."""
    best = None
    per_level = []
    for l in levels:
        x, raw = _best_on_surface(surfaces[l], cfg, seed)
        cost = level_cost(cfg.costs, l)
        per_level.append(raw)
        if best is None or raw / cost > best.weighted_pei:
            best = Proposal(x, l, raw / cost, raw, cost)
    return best, tuple(per_level)


def _check_ready(em):
    for ld in em.levels:
        if ld.n < 2:
            raise ValueError(f"level {ld.level} has {ld.n} design point(s); need at least 2")


def propose(em: MultiLevelEmulator, cfg: SamplerConfig, seed=0, levels=None) -> Proposal:
    """Joint choice of location and level maximizing PEI per unit cost.

    ``levels`` restricts the candidate levels (e.g. to the affordable ones).
    """
    _check_ready(em)
    levels = range(1, em.n_levels + 1) if levels is None else levels
    proposal, _ = _select(_surfaces(em, cfg, seed, levels), cfg, seed, levels)
    return proposal


def batch_same_level(em, cfg: SamplerConfig, q: int, seed=0, levels=None, max_cost=None) -> list:
    """``q`` points at one level: the first by :func:`propose`, the rest by that
    level's PEI with pending points added to the repulsion set.

    ``max_cost`` truncates the batch once the next point would exceed it.
    """
    _check_ready(em)
    levels = range(1, em.n_levels + 1) if levels is None else levels
    surfaces = _surfaces(em, cfg, seed, levels)
    first, _ = _select(surfaces, cfg, seed, levels)
    out = [first]
    surface = surfaces[first.level].with_pending(first.x)
    for k in range(1, q):
        if max_cost is not None and (k + 1) * first.cost_charged > max_cost + 1e-9:
            break
        x, raw = maximize_pei(surface, seed=[seed, 2, k], n_candidates=cfg.n_candidates_per_dim * surface.dim,
                              n_refine=cfg.n_refine)
        out.append(Proposal(x, first.level, raw / first.cost_charged, raw, first.cost_charged))
        surface = surface.with_pending(x)
    return out


def batch_mixed(em, cfg: SamplerConfig, q: int, seed=0, levels=None, max_cost=None) -> list:
    """``q`` full weighted proposals; each pick joins the repulsion set of its level only.

    EI surfaces are built once and frozen for the whole batch.
    """
    _check_ready(em)
    levels = list(range(1, em.n_levels + 1) if levels is None else levels)
    surfaces = _surfaces(em, cfg, seed, levels)
    out = []
    spent = 0.0
    for k in range(q):
        allowed = levels if max_cost is None else [
            l for l in levels if spent + level_cost(cfg.costs, l) <= max_cost + 1e-9]
        if not allowed:
            break
        round_seed = seed if k == 0 else [seed, 3, k]
        proposal, _ = _select(surfaces, cfg, round_seed, allowed)
        out.append(proposal)
        spent += proposal.cost_charged
        surfaces[proposal.level] = surfaces[proposal.level].with_pending(proposal.x)
    return out


# -- evaluation and the main loop -------------------------------------------

def _evaluate(simulators, x, level, iteration):
    try:
        f_level = float(simulators[level - 1](x))
        f_below = float(simulators[level - 2](x)) if level > 1 else None
    except Exception as exc:
        raise SimulatorError(f"simulator failed at level {level}, x={x.tolist()}: {exc}", iteration) from exc
    if not np.isfinite(f_level) or (f_below is not None and not np.isfinite(f_below)):
        raise SimulatorError(f"non-finite simulator output at level {level}, x={x.tolist()}", iteration)
    return f_level, f_below


def _apply(em, log_, proposals, simulators, iteration, metric, exploration=False, level_pei=()):
    runs = [(p.x, p.level, *_evaluate(simulators, p.x, p.level, iteration)) for p in proposals]
    new_em = em.add_runs(runs)
    value = metric(new_em) if metric is not None else np.nan
    hyper = new_em.hyperparameters()
    for p in proposals:
        log_.records.append(StepRecord(iteration, p.level, np.asarray(p.x, dtype=float), p.raw_pei,
                                       p.weighted_pei, p.cost_charged, log_.cost_cum + p.cost_charged,
                                       value, exploration, level_pei, hyper))
    log_.emulator = new_em
    return new_em


def step(em, cfg: SamplerConfig, log_: RunLog, simulators, seed=0, iteration=None,
         metric=None, levels=None):
    """One sequential iteration: propose, run the simulator(s), refit, log.

    ``simulators[l - 1]`` maps a point of shape ``(p,)`` to the level-``l``
    output. A simulator failure raises :class:`SimulatorError` before the
    emulator or the log change.

    Returns
    -------
    em : MultiLevelEmulator
        The updated snapshot.
    log : RunLog
    """
    iteration = len(log_.steps) + 1 if iteration is None else iteration
    _check_ready(em)
    levels = range(1, em.n_levels + 1) if levels is None else levels
    proposal, level_pei = _select(_surfaces(em, cfg, seed, levels), cfg, seed, levels)
    em = _apply(em, log_, [proposal], simulators, iteration, metric, level_pei=level_pei)
    return em, log_


def iteration_seed(seed: int, iteration: int) -> list[int]:
    return [int(seed), int(iteration)]


def run(em: MultiLevelEmulator, cfg: SamplerConfig, simulators, truth=None, test_grid=None) -> RunLog:
    """Run the adaptive design loop until the stopping rule fires.

    Every ``exploration_interval``-th iteration is replaced by an exploration
    run: a uniform random point at a level above 1, cycling through levels
    2..L. ``truth`` (top-level function on an ``(N, p)`` array) and
    ``test_grid`` enable NRMSE tracking.

    Returns
    -------
    RunLog
        ``log.emulator`` holds the final emulator.
    """
    if tuple(em.costs) != tuple(cfg.costs):
        em = em.with_costs(cfg.costs)
    L = em.n_levels
    step_costs = [level_cost(cfg.costs, l) for l in range(1, L + 1)]
    if cfg.stopping == "budget" and cfg.budget < min(step_costs) - 1e-9:
        raise ValueError(f"budget {cfg.budget} is smaller than the cheapest step ({min(step_costs)})")
    if cfg.stopping == "nrmse" and truth is None:
        raise ValueError("nrmse stopping needs a truth function")

    metric = None
    if truth is not None:
        if test_grid is None:
            raise ValueError("a test grid is needed with a truth function")
        truth_values = np.asarray(truth(test_grid), dtype=float)

        def metric(model):
            return nrmse(model.predict(test_grid, return_var=False), truth_values)

    log_ = RunLog(dim=em.dim, emulator=em)
    log_.records.append(StepRecord(0, 0, np.full(em.dim, np.nan), np.nan, np.nan, 0.0, 0.0,
                                   metric(em) if metric else np.nan, False, (), em.hyperparameters()))
    max_iter = {"iterations": cfg.max_iterations, "nrmse": cfg.max_iterations or _NRMSE_ITERATION_CAP}.get(cfg.stopping)
    n_explore = 0
    iteration = 0
    while True:
        if max_iter is not None and iteration >= max_iter:
            break
        if cfg.stopping == "nrmse" and log_.records[-1].nrmse <= cfg.nrmse_target:
            break
        remaining = cfg.budget - log_.cost_cum if cfg.stopping == "budget" else np.inf
        affordable = [l for l in range(1, L + 1) if step_costs[l - 1] <= remaining + 1e-9]
        if not affordable:
            break
        iteration += 1
        seed = iteration_seed(cfg.seed, iteration)
        explore_levels = [l for l in affordable if l > 1]
        if cfg.exploration_interval and iteration % cfg.exploration_interval == 0 and explore_levels:
            level = explore_levels[n_explore % len(explore_levels)]
            n_explore += 1
            rng = np.random.default_rng(seed + [11])
            x = rng.random(em.dim)
            cost = step_costs[level - 1]
            proposal = Proposal(x, level, np.nan, np.nan, cost)
            em = _apply(em, log_, [proposal], simulators, iteration, metric, exploration=True)
        elif cfg.batch_mode == "sequential":
            em, log_ = step(em, cfg, log_, simulators, seed=seed, iteration=iteration,
                            metric=metric, levels=affordable)
        else:
            batch_fn = batch_same_level if cfg.batch_mode == "same-level" else batch_mixed
            proposals = batch_fn(em, cfg, cfg.batch_size, seed=seed, levels=affordable,
                                 max_cost=remaining if cfg.stopping == "budget" else None)
            em = _apply(em, log_, proposals, simulators, iteration, metric)
        last = log_.records[-1]
        log.debug("iteration %d: level %d, cost %.3g, nrmse %.4g", iteration, last.level,
                  last.cost_cum, last.nrmse)
    log_.emulator = em
    return log_
