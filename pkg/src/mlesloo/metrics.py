"""Accuracy metric and test grids."""

from __future__ import annotations

import itertools

import numpy as np


def nrmse(predictions, truth) -> float:
    """Root-mean-squared error divided by the range of ``truth``."""
    predictions = np.asarray(predictions, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if predictions.shape != truth.shape:
        raise ValueError("predictions and truth must have the same length")
    if truth.size < 2:
        raise ValueError("need at least two test points")
    span = truth.max() - truth.min()
    if span <= 0:
        raise ValueError("truth is constant; NRMSE is undefined")
    return float(np.sqrt(np.mean((predictions - truth) ** 2)) / span)


def uniform_grid(p: int, per_axis: int | None = None, max_points: int = 20000) -> np.ndarray:
    """Full factorial grid on ``[0, 1]^p`` including the endpoints.

    The default resolution is ``round(10000 ** (1 / p))`` per axis, reduced
    until the grid has at most ``max_points`` points.
    """
    g = int(round(10000 ** (1.0 / p))) if per_axis is None else int(per_axis)
    g = max(g, 2)
    while g > 2 and g ** p > max_points:
        g -= 1
    axis = np.linspace(0.0, 1.0, g)
    return np.array(list(itertools.product(axis, repeat=p)))
