"""Covariance operator estimators: empirical, kernel-smoothed and spatial."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .fcore import CovarianceOperator, FunctionalSample


def epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)


def gaussian_kernel(u):
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi)


KERNELS = {"epanechnikov": epanechnikov, "gaussian": gaussian_kernel}


def sample_mean(s):
    if s.n < 1:
        raise ValueError("cannot average an empty sample")
    return s.values.mean(axis=0)


def _centered_cov(x, grid):
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    k = xc.T @ xc / n
    return CovarianceOperator(grid, 0.5 * (k + k.T))


def sample_cov(s):
    """Empirical covariance operator with divisor ``n``.

    ``K[m, l] = (1/n) sum_j (X_j(t_m) - Xbar(t_m)) (X_j(t_l) - Xbar(t_l))``.
    """
    if s.n < 2:
        raise ValueError(f"sample covariance needs at least 2 curves, got {s.n}")
    return _centered_cov(s.values, s.grid)


def smoothing_matrix(grid, h, kernel="epanechnikov"):
    """Row-normalized discrete convolution matrix ``S`` with ``X_h = X S^T``.

    ``S[m, l]`` is proportional to ``w_l K((t_m - t_l) / h) / h`` and every row
    sums to one, which removes the boundary bias on a compact interval.
    """
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    kfun = KERNELS[kernel] if isinstance(kernel, str) else kernel
    t = grid.points
    raw = kfun((t[:, None] - t[None, :]) / h) / h
    if np.any(raw < 0):
        raise ValueError("smoothing kernel must be nonnegative")
    raw = raw * grid.weights[None, :]
    mass = raw.sum(axis=1)
    if np.any(mass <= 0):
        raise ValueError("bandwidth too small: some grid points receive no kernel mass")
    return raw / mass[:, None]


def smooth_curves(s, h, kernel="epanechnikov"):
    smat = smoothing_matrix(s.grid, h, kernel)
    return s.with_values(s.values @ smat.T)


def smoothed_cov(s, h, kernel="epanechnikov"):
    """Sample covariance of the kernel-smoothed trajectories."""
    return sample_cov(smooth_curves(s, h, kernel))


@dataclass(frozen=True)
class SpatialMedian:
    median: np.ndarray
    n_iter: int
    converged: bool
    grad_norm: float


def _spatial_objective(x, mu, w):
    d = x - mu
    return float(np.sqrt(np.maximum((d * d) @ w, 0.0)).sum())


def spatial_objective(s, mu):
    """``sum_j ||X_j - mu||`` in the grid's L2 norm."""
    return _spatial_objective(s.values, np.asarray(mu, dtype=float), s.grid.weights)


def spatial_median(s, tol=1e-8, max_iter=1000):
    """Minimize ``sum_j ||X_j - mu||`` by Weiszfeld iterations.

    The iteration starts at the coordinatewise median. When an iterate lands
    on a data curve the Vardi-Zhang step is used: the remaining curves pull
    the iterate off the data point unless their summed unit directions have
    norm at most one, in which case the data curve is the minimizer.

    Returns
    -------
    SpatialMedian
        ``converged`` is False (and a RuntimeWarning issued) when the gradient
        norm is still above ``tol`` after ``max_iter`` iterations.
    """
    x = s.values
    w = s.grid.weights
    n = x.shape[0]
    mu = np.median(x, axis=0)
    scale = max(float(np.sqrt(((x - mu) ** 2 @ w).max())), np.finfo(float).tiny)
    eps = 1e-12 * scale
    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        diff = x - mu
        dist = np.sqrt(np.maximum((diff * diff) @ w, 0.0))
        at = dist < eps
        free = ~at
        if not free.any():
            return SpatialMedian(mu, it, True, 0.0)
        inv = 1.0 / dist[free]
        # R is minus the gradient of the smooth part of the objective
        r = (diff[free] * inv[:, None]).sum(axis=0)
        r_norm = float(np.sqrt(max(r * r @ w, 0.0)))
        mult = int(at.sum())
        grad_norm = max(r_norm - mult, 0.0) if mult else r_norm
        if grad_norm <= tol:
            return SpatialMedian(mu, it, True, grad_norm)
        t = (x[free] * inv[:, None]).sum(axis=0) / inv.sum()
        if mult:
            gamma = min(1.0, mult / r_norm)
            t = (1.0 - gamma) * t + gamma * mu
        mu = t
    warnings.warn(
        f"spatial median did not converge in {max_iter} iterations "
        f"(gradient norm {grad_norm:.3g})",
        RuntimeWarning,
        stacklevel=2,
    )
    return SpatialMedian(mu, max_iter, False, grad_norm)


def spatial_cov(s, center=None, return_dropped=False):
    """Spatial (sign) covariance ``(1/n) sum_j u_j (x) u_j``, ``u_j`` unit directions.

    Curves closer than ``1e-12`` times the sample scale to ``center`` are
    left out of the sum; the divisor stays ``n``, so the trace equals the
    fraction of retained curves.
    """
    if center is None:
        center = spatial_median(s).median
    center = s.grid.check_curve(center, "center")
    if not np.all(np.isfinite(center)):
        raise ValueError("center contains non-finite values")
    d = s.values - center
    dist = np.sqrt(np.maximum((d * d) @ s.grid.weights, 0.0))
    scale = dist.max()
    keep = dist > 1e-12 * scale if scale > 0 else np.zeros(dist.shape, dtype=bool)
    if not keep.any():
        raise ValueError("every curve coincides with the center")
    u = d[keep] / dist[keep, None]
    k = u.T @ u / s.n
    op = CovarianceOperator(s.grid, 0.5 * (k + k.T))
    n_dropped = int((~keep).sum())
    return (op, n_dropped) if return_dropped else op


def estimate_cov(s, estimator="empirical", bandwidth=None, kernel="epanechnikov"):
    """Dispatch on the estimator name used throughout the test pipeline."""
    if estimator == "empirical":
        return sample_cov(s)
    if estimator == "smoothed":
        if bandwidth is None:
            raise ValueError("the smoothed estimator needs a bandwidth")
        return smoothed_cov(s, bandwidth, kernel)
    if estimator == "spatial":
        return spatial_cov(s, spatial_median(s).median)
    raise ValueError(f"unknown estimator {estimator!r}")
