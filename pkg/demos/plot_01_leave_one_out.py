"""
Leave-one-out errors of a single Gaussian process
=================================================

Fit a GP to a handful of runs of a 1-D function and read off the
leave-one-out predictions, computed in closed form without refitting.
"""

import numpy as np

from mlesloo import esloo_value, fit_gp

# A small design on [0, 1] and a wiggly response
X = np.linspace(0.05, 0.95, 7)[:, None]
y = np.sin(6.0 * X[:, 0]) + 0.5 * X[:, 0]

gp = fit_gp(X, y, seed=0)
print("fitted hyperparameters:", gp.hyperparameters())

# Closed-form leave-one-out mean and variance at each design point
mean, var = gp.loo()
for x, yi, m, v in zip(X[:, 0], y, mean, var):
    print(f"x={x:.2f}  y={yi:+.3f}  loo mean={m:+.3f}  loo sd={np.sqrt(v):.3f}")

# The normalized expected squared LOO error flags the points the model is
# least sure about; large values mean a large error relative to its spread.
score = esloo_value(mean - y, var)
print("normalized squared-error score:", np.round(score, 3))
print("most informative neighbourhood: x =", X[np.argmax(score), 0])
