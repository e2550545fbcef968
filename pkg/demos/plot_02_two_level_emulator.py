"""
A two-level emulator
====================

Combine many cheap runs with a few expensive ones. Each level gets its own
GP: level 1 models the cheap code, level 2 models the discrepancy between
the expensive and the cheap code.
"""

import numpy as np

from mlesloo import MultiLevelEmulator, initial_designs, nrmse, two_level_2d, uniform_grid

problem = two_level_2d()
print("problem:", problem.name, "costs:", problem.costs)

# 8 cheap runs from a maximin Latin hypercube, 4 expensive runs placed where
# the cheap model is least reliable
design = initial_designs(problem, (8, 4), seed=0)
print("initial sizes:", design.sizes, "setup cost:", design.setup_cost)

em = MultiLevelEmulator.fit(design.X, design.y, design.y_low, rho=[1.0], costs=problem.costs, seed=0)
for l in (1, 2):
    print(f"level {l} hyperparameters:", em.gp(l).hyperparameters())

# Accuracy against the expensive code on a 100 x 100 grid
grid = uniform_grid(2)
pred = em.predict(grid, return_var=False)
print("NRMSE of the initial emulator:", round(nrmse(pred, problem.truth(grid)), 4))
