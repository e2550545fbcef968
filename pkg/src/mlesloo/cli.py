"""Command-line entry point.

Subcommands::

    mlesloo run --config cfg.yaml [--out DIR] [--parallel]
    mlesloo sweep --config cfg.yaml [--out DIR] [--parallel]
    mlesloo replicate-paper [--out DIR] [--seeds N] [--parallel]

Exit codes: 0 success, 1 runtime failure, 2 rejected configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

import numpy as np
import yaml

from .experiment import (ExperimentConfig, batch_vs_sequential, cost_ratio_sweep, curve_rows,
                         run_experiment, single_vs_multi_comparison, write_json, write_table)
from .multilevel import RHO_MODES
from .problems import get_problem, problem_registry
from .sampler import BATCH_MODES, STOPPING_RULES, SamplerConfig, SimulatorError

log = logging.getLogger("mlesloo")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

REPLICATION_RATIOS = (1.0, 2.0, 8.0, 32.0, 100.0, 500.0)

_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}
_EXTRA = {"output_dir", "ratios"}


class ConfigError(ValueError):
    """Configuration rejected; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"config field {field!r}: {message}")
        self.field = field


def _require(cond, field, message):
    if not cond:
        raise ConfigError(field, message)


def _int_list(raw, field, min_value=None):
    values = raw if isinstance(raw, (list, tuple)) else [raw]
    try:
        out = [int(v) for v in values]
    except (TypeError, ValueError):
        raise ConfigError(field, "expected integers") from None
    if any(isinstance(v, bool) or (isinstance(v, float) and not float(v).is_integer()) for v in values):
        raise ConfigError(field, "expected integers")
    if min_value is not None:
        _require(all(v >= min_value for v in out), field, f"values must be >= {min_value}")
    return out


def _float_list(raw, field):
    values = raw if isinstance(raw, (list, tuple)) else [raw]
    try:
        out = [float(v) for v in values]
    except (TypeError, ValueError):
        raise ConfigError(field, "expected numbers") from None
    _require(all(np.isfinite(v) for v in out), field, "values must be finite")
    return out


def validate_config(raw: dict, *, need_ratios: bool = False):
    """Check a parsed config mapping and build an :class:`ExperimentConfig`.

    Returns
    -------
    cfg : ExperimentConfig
    extra : dict
        ``output_dir`` and, for sweeps, ``ratios``.

    Raises
    ------
    ConfigError
        Naming the first offending field. No simulator is called.
    """
    _require(isinstance(raw, dict), "<root>", "config must be a mapping")
    unknown = sorted(set(raw) - _FIELDS - _EXTRA)
    _require(not unknown, unknown[0] if unknown else "", "unknown field")

    _require("costs" in raw and raw["costs"] is not None, "costs", "missing required field")
    costs = _float_list(raw["costs"], "costs")
    _require(len(costs) >= 1 and costs[0] > 0 and all(b >= a for a, b in zip(costs, costs[1:])),
             "costs", "must be positive and non-decreasing")

    problem = raw.get("problem", "two-level-2d")
    if isinstance(problem, dict):
        _require("dim" in problem and "levels" in problem, "problem", "inline problem needs dim and levels")
        problem = dict(problem, costs=costs)
    else:
        _require(isinstance(problem, str) and problem in problem_registry(), "problem",
                 f"unknown problem; known: {sorted(problem_registry())}")
    try:
        resolved = get_problem(problem, costs)
    except (ValueError, KeyError, SyntaxError, TypeError) as exc:
        raise ConfigError("problem" if "cost" not in str(exc) else "costs", str(exc)) from None
    L = resolved.n_levels
    _require(len(costs) == L, "costs", f"need {L} costs for this problem")

    sizes = _int_list(raw.get("initial_sizes", [8, 4]), "initial_sizes", min_value=1)
    _require(len(sizes) == L, "initial_sizes", f"need {L} sizes")
    _require(all(s >= 2 for s in sizes), "initial_sizes", "every level needs at least 2 initial points")

    rho_mode = raw.get("rho_mode", "fixed")
    _require(rho_mode in RHO_MODES, "rho_mode", f"must be one of {RHO_MODES}")
    rho = _float_list(raw.get("rho", [1.0] * (L - 1)), "rho") if L > 1 else []
    _require(len(rho) == L - 1, "rho", f"need {L - 1} values")

    seeds_raw = raw.get("seeds", 10)
    if isinstance(seeds_raw, int) and not isinstance(seeds_raw, bool):
        _require(seeds_raw >= 1, "seeds", "need at least one seed")
        seeds = list(range(seeds_raw))
    else:
        seeds = _int_list(seeds_raw, "seeds", min_value=0)
        _require(len(seeds) >= 1, "seeds", "need at least one seed")
        _require(len(set(seeds)) == len(seeds), "seeds", "seeds must be distinct")

    grid = raw.get("grid_per_axis")
    if grid is not None:
        grid = _int_list(grid, "grid_per_axis", min_value=2)[0]

    stopping = raw.get("stopping", "iterations")
    _require(stopping in STOPPING_RULES, "stopping", f"must be one of {STOPPING_RULES}")
    batch_mode = raw.get("batch_mode", "sequential")
    _require(batch_mode in BATCH_MODES, "batch_mode", f"must be one of {BATCH_MODES}")

    if stopping == "budget":
        _require(raw.get("budget") is not None, "budget", "required when stopping is 'budget'")
    if stopping == "nrmse":
        _require(raw.get("nrmse_target") is not None, "nrmse_target", "required when stopping is 'nrmse'")

    kwargs = {k: raw[k] for k in raw if k in _FIELDS}
    kwargs.update(problem=problem, costs=tuple(costs), initial_sizes=tuple(sizes), rho=tuple(rho),
                  seeds=tuple(seeds), grid_per_axis=grid, rho_mode=rho_mode, stopping=stopping,
                  batch_mode=batch_mode)
    if stopping != "iterations" and "max_iterations" not in raw:
        kwargs["max_iterations"] = None
    try:
        cfg = ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(_guess_field(str(exc)), str(exc)) from None
    # the sampler validates stopping/batch settings
    try:
        SamplerConfig(costs=tuple(costs), stopping=cfg.stopping, budget=cfg.budget,
                      max_iterations=cfg.max_iterations, nrmse_target=cfg.nrmse_target,
                      batch_size=cfg.batch_size, batch_mode=cfg.batch_mode,
                      exploration_interval=cfg.exploration_interval)
    except (TypeError, ValueError) as exc:
        raise ConfigError(_guess_field(str(exc)), str(exc)) from None
    if cfg.stopping == "budget":
        cheapest = costs[0]
        _require(cfg.budget >= cheapest, "budget", f"smaller than the cheapest step ({cheapest})")

    extra = {"output_dir": raw.get("output_dir", "results")}
    if need_ratios:
        _require("ratios" in raw, "ratios", "missing required field")
        ratios = _float_list(raw["ratios"], "ratios")
        _require(len(ratios) > 0, "ratios", "must not be empty")
        _require(all(r >= 1.0 for r in ratios), "ratios", "must be >= 1")
        _require(L == 2, "problem", "ratio sweeps need a two-level problem")
        extra["ratios"] = ratios
    return cfg, extra


def _guess_field(message: str) -> str:
    for name in sorted(_FIELDS | _EXTRA, key=len, reverse=True):
        if name in message:
            return name
    return "<config>"


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"invalid YAML: {exc}") from None
    return {} if raw is None else raw


def _resolved(cfg: ExperimentConfig, extra: dict) -> dict:
    out = cfg.to_dict()
    out.update({k: v for k, v in extra.items() if k != "output_dir"})
    return out


def _save_experiment(res, out_dir, extra) -> None:
    res.save(out_dir)
    summary = res.summary()
    summary["config"] = _resolved(res.config, extra)
    write_json(os.path.join(out_dir, "summary.json"), summary)
    write_table(os.path.join(out_dir, "curve.csv"), curve_rows(res.curve))


def cmd_run(config_path, out=None, parallel=False) -> int:
    raw = load_config(config_path)
    cfg, extra = validate_config(raw)
    out_dir = out or extra["output_dir"]
    res = run_experiment(cfg, parallel=parallel)
    _save_experiment(res, out_dir, extra)
    log.info("wrote %d run logs to %s", len(res.logs), out_dir)
    return EXIT_OK


def cmd_sweep(config_path, out=None, parallel=False) -> int:
    raw = load_config(config_path)
    cfg, extra = validate_config(raw, need_ratios=True)
    out_dir = out or extra["output_dir"]
    rows = cost_ratio_sweep(cfg, extra["ratios"], parallel=parallel)
    os.makedirs(out_dir, exist_ok=True)
    write_table(os.path.join(out_dir, "sweep.csv"), rows)
    write_json(os.path.join(out_dir, "summary.json"), {"config": _resolved(cfg, extra), "sweep": rows})
    return EXIT_OK


def replication_config(n_seeds: int = 10) -> ExperimentConfig:
    """Two-level toy problem, costs 1:8, initial sizes (8, 4), 30 sequential iterations."""
    return ExperimentConfig(problem="two-level-2d", costs=(1.0, 8.0), initial_sizes=(8, 4),
                            rho_mode="fixed", rho=(1.0,), stopping="iterations", max_iterations=30,
                            exploration_interval=0, seeds=tuple(range(n_seeds)))


def cmd_replicate_paper(out=None, seeds: int = 10, parallel=False) -> int:
    """The toy-problem study: 30-iteration runs, sequential vs batch and
    single- vs multi-level at budget 100, and the cost-ratio sweep."""
    if seeds < 1:
        raise ConfigError("--seeds", "need at least one seed")
    out_dir = out or "replication"
    os.makedirs(out_dir, exist_ok=True)
    cfg = replication_config(seeds)

    main = run_experiment(cfg, parallel=parallel)
    _save_experiment(main, os.path.join(out_dir, "sequential_30"), {})
    counts = main.level_counts()
    write_table(os.path.join(out_dir, "level_allocation.csv"),
                [{"seed": s, "level1": counts[s][1], "level2": counts[s][2],
                  "total": counts[s][1] + counts[s][2],
                  "initial_nrmse": main.initial_nrmse()[s], "final_nrmse": main.final_nrmse()[s]}
                 for s in main.seeds])

    bvs = batch_vs_sequential(cfg, budget=100.0, q=5, mode="mixed", parallel=parallel)
    _save_experiment(bvs["sequential"], os.path.join(out_dir, "budget100_sequential"), {})
    _save_experiment(bvs["batch"], os.path.join(out_dir, "budget100_batch5"), {})
    seq_c, bat_c = bvs["sequential_curve"], bvs["batch_curve"]
    write_table(os.path.join(out_dir, "batch_vs_sequential.csv"),
                [{"cost": float(c), "sequential_median": float(a), "sequential_q05": float(b),
                  "sequential_q95": float(d), "batch_median": float(e), "batch_q05": float(f),
                  "batch_q95": float(g)}
                 for c, a, b, d, e, f, g in zip(seq_c["cost"], seq_c["median"], seq_c["q05"], seq_c["q95"],
                                                bat_c["median"], bat_c["q05"], bat_c["q95"])])

    svm = single_vs_multi_comparison(cfg, budget=100.0, parallel=parallel, multi=bvs["sequential"])
    write_table(os.path.join(out_dir, "single_vs_multi.csv"),
                [{"cost": float(c), "median_difference": float(m), "q05": float(a), "q95": float(b)}
                 for c, m, a, b in zip(svm["cost"], svm["median_difference"], svm["q05"], svm["q95"])])

    sweep_cfg = dataclasses.replace(cfg, max_iterations=50)
    rows = cost_ratio_sweep(sweep_cfg, REPLICATION_RATIOS, parallel=parallel)
    write_table(os.path.join(out_dir, "sweep.csv"), rows)

    write_json(os.path.join(out_dir, "summary.json"), {
        "config": cfg.to_dict(),
        "seeds": main.seeds,
        "sequential_30": {
            "initial_nrmse": [main.initial_nrmse()[s] for s in main.seeds],
            "final_nrmse": [main.final_nrmse()[s] for s in main.seeds],
            "level_counts": [[counts[s][1], counts[s][2]] for s in main.seeds],
        },
        "batch_vs_sequential": {"budget": 100.0, "batch_size": 5, "batch_mode": "mixed",
                                "sequential_final_median": float(seq_c["median"][-1]),
                                "batch_final_median": float(bat_c["median"][-1])},
        "single_vs_multi": {"budget": 100.0,
                            "median_difference": list(svm["median_difference"])},
        "sweep": {"ratios": list(REPLICATION_RATIOS), "iterations": 50, "rows": rows},
    })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlesloo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out")
        p.add_argument("--parallel", action="store_true")
    p = sub.add_parser("replicate-paper")
    p.add_argument("--out")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--parallel", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out, args.parallel)
        if args.command == "sweep":
            return cmd_sweep(args.config, args.out, args.parallel)
        return cmd_replicate_paper(args.out, args.seeds, args.parallel)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulatorError as exc:
        print(f"error: run failed at iteration {exc.iteration}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime failure
        log.exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
