"""Input checks shared by the estimator API and the CLI."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .fcore import FunctionalSample, Grid


def check_curves(X, min_rows=1):
    """Curves as a finite float array of shape (n_curves, n_points)."""
    return check_array(X, dtype=float, ensure_2d=True, ensure_min_samples=min_rows, ensure_all_finite=True)


def resolve_grid(grid, n_points):
    """Grid for curves with ``n_points`` values; uniform on [0, 1] when None."""
    if grid is None:
        return Grid.uniform(0.0, 1.0, n_points)
    if not isinstance(grid, Grid):
        grid = Grid(grid)
    if grid.size != n_points:
        raise ValueError(f"grid has {grid.size} points but curves have {n_points} values")
    return grid


def group_order(y):
    """Distinct labels of ``y`` in order of first appearance."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("group labels must be one-dimensional")
    _, first = np.unique(y, return_index=True)
    return y[np.sort(first)]


def split_groups(X, y, grid=None, min_groups=2, min_size=2):
    """Split curves into one FunctionalSample per group label."""
    X = check_curves(X)
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise ValueError(f"expected {X.shape[0]} group labels, got shape {y.shape}")
    grid = resolve_grid(grid, X.shape[1])
    labels = group_order(y)
    if labels.size < min_groups:
        raise ValueError(f"need at least {min_groups} groups, got {labels.size}")
    samples = []
    for lab in labels:
        rows = X[y == lab]
        if rows.shape[0] < min_size:
            raise ValueError(f"group {lab!r} has {rows.shape[0]} curve(s); at least {min_size} are needed")
        samples.append(FunctionalSample(grid, rows, str(lab)))
    return samples
