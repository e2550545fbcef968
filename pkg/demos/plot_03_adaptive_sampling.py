"""
Cost-aware adaptive sampling
============================

Starting from the initial two-level emulator, repeatedly pick a level and an
input by maximizing the cost-weighted acquisition, run the chosen code and
refit. The run log records every choice and the NRMSE after it.
"""

import numpy as np

from mlesloo import (MultiLevelEmulator, SamplerConfig, initial_designs, run, two_level_2d,
                     uniform_grid)

problem = two_level_2d()
design = initial_designs(problem, (8, 4), seed=0)
em = MultiLevelEmulator.fit(design.X, design.y, design.y_low, rho=[1.0], costs=problem.costs, seed=0)

cfg = SamplerConfig(costs=problem.costs, stopping="iterations", max_iterations=10,
                    exploration_interval=0, seed=0)
log = run(em, cfg, problem.simulators(), truth=problem.truth, test_grid=uniform_grid(2))

for r in log.records:
    where = "setup" if r.level == 0 else f"level {r.level} at {np.round(r.x, 3)}"
    print(f"{r.iteration:2d}  {where:<28s}  cost {r.cost_cum:6.1f}  NRMSE {r.nrmse:.4f}")

counts = log.level_counts(2)
print("picks per level:", counts)

# Switching to a batch of 3 per iteration mixes levels inside each batch.
batch_cfg = SamplerConfig(costs=problem.costs, stopping="budget", budget=60.0, batch_size=3,
                          batch_mode="mixed", exploration_interval=0, seed=0)
batch_log = run(em, batch_cfg, problem.simulators(), truth=problem.truth, test_grid=uniform_grid(2))
print("batch run: cost", batch_log.cost_cum, "final NRMSE", round(batch_log.records[-1].nrmse, 4))
