"""Weighted chi-square mixtures ``U = sum_l theta_l (Z_l + delta_l)^2``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special, stats

from .fcore import _frozen

DEFAULT_N_BOOT = 5000
BLOCK_SIZE = 1 << 16


@dataclass(frozen=True, eq=False)
class ChiSquareMixture:
    """Law of ``sum_l weights[l] * (Z_l + shifts[l])**2`` with iid standard normal ``Z``.

    Weights are stored in nonincreasing order (shifts follow their weight).
    """

    weights: np.ndarray
    shifts: np.ndarray = None

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        d = np.zeros_like(w) if self.shifts is None else np.atleast_1d(np.asarray(self.shifts, dtype=float))
        if w.ndim != 1 or d.shape != w.shape:
            raise ValueError("weights and shifts must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(d))):
            raise ValueError("weights and shifts must be finite")
        if np.any(w < 0):
            raise ValueError("mixture weights must be nonnegative")
        order = np.argsort(-w, kind="stable")
        object.__setattr__(self, "weights", _frozen(w[order]))
        object.__setattr__(self, "shifts", _frozen(d[order]))

    def __len__(self):
        return self.weights.size

    @property
    def is_central(self):
        return not np.any(self.shifts)

    def cumulant(self, r):
        """``kappa_r = 2^(r-1) (r-1)! sum theta^r (1 + r delta^2)``."""
        w, d = self.weights, self.shifts
        return float(2 ** (r - 1) * math.factorial(r - 1) * np.sum(w**r * (1 + r * d * d)))

    def mean(self):
        return self.cumulant(1)

    def var(self):
        return self.cumulant(2)


def as_seed_sequence(seed, *keys):
    """Derive an independent SeedSequence for the stream addressed by ``keys``."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(keys))
    return np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))


def make_rng(seed, *keys):
    """Counter-based generator for stream ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(as_seed_sequence(seed, *keys)))


def _normal_draws(m, count, seed):
    # Each block of BLOCK_SIZE rows comes from its own (seed, block) stream, so
    # any block can be regenerated independently of the others.
    if seed is None:
        seed = np.random.SeedSequence()
    out = np.empty((count, m))
    for b, start in enumerate(range(0, count, BLOCK_SIZE)):
        stop = min(start + BLOCK_SIZE, count)
        out[start:stop] = make_rng(seed, b).standard_normal((stop - start, m))
    return out


def sample_mixture(mix, count, seed=None):
    """``count`` iid draws of the mixture; deterministic for a fixed seed."""
    count = int(count)
    if count < 1:
        raise ValueError("count must be at least 1")
    if len(mix) == 0:
        return np.zeros(count)
    z = _normal_draws(len(mix), count, seed)
    if not mix.is_central:
        z += mix.shifts
    return (z * z) @ mix.weights


def pvalue_from_draws(draws, t_obs):
    """Fraction of draws ``>= t_obs``."""
    draws = np.asarray(draws)
    return int(np.count_nonzero(draws >= t_obs)) / draws.size


def quantile_from_draws(draws, level):
    """Type-1 empirical quantile: order statistic ``ceil(level * N)``."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    draws = np.sort(np.asarray(draws))
    n = draws.size
    k = n - int(math.floor((1.0 - level) * n + 1e-9))
    return float(draws[min(max(k, 1), n) - 1])


def pvalue_mc(mix, t_obs, n_boot=DEFAULT_N_BOOT, seed=None):
    return pvalue_from_draws(sample_mixture(mix, n_boot, seed), t_obs)


def quantile_mc(mix, level, n_boot=DEFAULT_N_BOOT, seed=None):
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    return quantile_from_draws(sample_mixture(mix, n_boot, seed), level)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)


def _raw_moments(w, d):
    k1 = np.sum(w * (1 + d * d))
    k2 = 2 * np.sum(w**2 * (1 + 2 * d * d))
    k3 = 8 * np.sum(w**3 * (1 + 3 * d * d))
    return k1, k1**2 + k2, k3 + 3 * k2 * k1 + k1**3


def _log_chi2_power_moment(p, r, k):
    # log E[(chi2_p)^(r k)]
    return special.gammaln(p / 2 + r * k) - special.gammaln(p / 2) + r * k * math.log(2.0)


def _power_fit(w, d):
    """Fit ``A * (chi2_p)^r`` to the first three raw moments of ``sum w (Z + d)^2``."""
    m1, m2, m3 = _raw_moments(w, d)
    target = np.log([m2 / m1**2, m3 / m1**3])

    def resid(x):
        p, r = np.exp(x)
        l1 = _log_chi2_power_moment(p, r, 1)
        return [
            _log_chi2_power_moment(p, r, 2) - 2 * l1 - target[0],
            _log_chi2_power_moment(p, r, 3) - 3 * l1 - target[1],
        ]

    start = [math.log(2 * m1**2 / (m2 - m1**2)), 0.0]
    x, info, ok, _ = optimize.fsolve(resid, start, full_output=True)
    if ok != 1 or np.max(np.abs(info["fvec"])) > 1e-8:
        raise ArithmeticError("three-moment fit of the mixture remainder did not converge")
    p, r = np.exp(x)
    return m1 / math.exp(_log_chi2_power_moment(p, r, 1)), p, r


def _remainder_cdf(w, d):
    keep = w > 0
    w, d = w[keep], d[keep]
    if w.size == 0:
        return lambda x: (x >= 0).astype(float)
    if np.allclose(w, w[0], rtol=1e-12, atol=0):
        nc = float(np.sum(d * d))
        if nc == 0:
            return lambda x: stats.chi2.cdf(np.maximum(x, 0) / w[0], w.size)
        return lambda x: stats.ncx2.cdf(np.maximum(x, 0) / w[0], w.size, nc)
    a, p, r = _power_fit(w, d)
    return lambda x: stats.chi2.cdf((np.maximum(x, 0) / a) ** (1 / r), p)


def cdf_moment_match(mix, t):
    """Analytic approximation of the mixture CDF.

    The largest term ``theta_1 (Z_1 + delta_1)^2`` is kept exact and the
    remaining terms are replaced by ``A * (chi2_p)^r`` matched on three raw
    moments; the two are combined by Gauss-Legendre quadrature over ``Z_1``.
    Mixtures whose positive weights are all equal are handled exactly.
    """
    w, d = mix.weights, mix.shifts
    if not np.any(w > 0):
        raise ValueError("moment matching needs at least one positive weight")
    t_arr = np.asarray(t, dtype=float)
    flat = np.atleast_1d(t_arr).ravel()
    pos = w > 0
    if np.allclose(w[pos], w[0], rtol=1e-12, atol=0):
        out = _remainder_cdf(w, d)(flat)
    else:
        rest = _remainder_cdf(w[1:], d[1:])
        out = np.zeros(flat.size)
        live = flat > 0
        ymax = np.sqrt(flat[live] / w[0])
        y = _GL_NODES[None, :] * ymax[:, None]
        dens = stats.norm.pdf(y - d[0])
        f = rest(flat[live][:, None] - w[0] * y * y)
        out[live] = (f * dens * _GL_WEIGHTS[None, :]).sum(axis=1) * ymax
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if t_arr.ndim == 0 else out.reshape(t_arr.shape)


def quantile_moment_match(mix, level):
    """Inverse of :func:`cdf_moment_match` by root finding."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    hi = mix.mean() + 10 * math.sqrt(mix.var())
    while cdf_moment_match(mix, hi) < level:
        hi *= 2
    return float(optimize.brentq(lambda x: cdf_moment_match(mix, x) - level, 0.0, hi, xtol=1e-12, rtol=1e-12))


def empirical_cdf(draws, t):
    draws = np.sort(np.asarray(draws))
    return np.searchsorted(draws, np.asarray(t, dtype=float), side="right") / draws.size


def kolmogorov_distance(draws_a, draws_b):
    """Sup distance between the empirical CDFs of two samples."""
    return float(stats.ks_2samp(draws_a, draws_b).statistic)
